#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <semaphore>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pdzseg/contour.hpp"
#include "pdzseg/error.hpp"
#include "pdzseg/model.hpp"

namespace pdzseg {

inline constexpr int kMaxImageSide = 4096;

struct SegmentRequest {
  std::vector<std::uint8_t> image_png;
  nlohmann::json prompt;  // prompt document; {"kind": "none"} when absent
  std::string model_id;   // empty selects the default model
};

struct SegmentResponse {
  std::vector<std::uint8_t> mask_png;
  int width = 0;
  int height = 0;
  std::vector<Contour> contours;
  double latency_ms = 0.0;
};

struct RegisteredModel {
  std::string id;
  std::shared_ptr<const SegModel<float>> model;
  std::string checkpoint_hash;
};

// HTTP status for a library error: bad input 400, unknown model 404,
// oversized image 413, anything else 500.
int http_status(ErrorKind kind);

class SegmentService {
 public:
  explicit SegmentService(std::vector<RegisteredModel> models, int max_concurrent_forwards = 2);

  // Prompt rasterised at native resolution, resized to the model input,
  // argmax mask resized back (nearest) and traced. Deterministic per request.
  SegmentResponse handle_segment(const SegmentRequest& req) const;

  nlohmann::json health() const;
  nlohmann::json models() const;

  struct HttpReply {
    int status = 200;
    nlohmann::json body;
  };
  // JSON request body {image: base64 PNG, prompt, model_id} -> reply.
  HttpReply handle_segment_json(const std::string& body) const;

  const RegisteredModel& find(const std::string& id) const;

 private:
  std::vector<RegisteredModel> models_;
  mutable std::counting_semaphore<64> slots_;
};

nlohmann::json response_to_json(const SegmentResponse& resp);

// HTTP front end: POST /v1/segment, GET /v1/health, GET /v1/models.
class HttpServer {
 public:
  explicit HttpServer(const SegmentService& service, int threads = 4);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;
  // Port 0 binds an ephemeral port. Returns the bound port; throws kIo.
  int bind(const std::string& host, int port);
  // Blocks until stop() is called from another thread.
  void run();
  // Returns once run() is accepting connections.
  void wait_until_ready() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// bind + run.
void serve_http(const SegmentService& service, const std::string& host, int port, int threads = 4);

}  // namespace pdzseg
