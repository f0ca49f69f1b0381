#include "pdzseg/service.hpp"

#include <algorithm>
#include <chrono>

#include "pdzseg/hash.hpp"
#include "pdzseg/loss.hpp"

namespace pdzseg {

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUnknownPromptKind:
    case ErrorKind::kInvalidPrompt:
    case ErrorKind::kOutOfBounds:
    case ErrorKind::kShapeMismatch:
    case ErrorKind::kIo:
      return 400;
    case ErrorKind::kUnknownModel:
      return 404;
    case ErrorKind::kImageTooLarge:
      return 413;
    default:
      return 500;
  }
}

SegmentService::SegmentService(std::vector<RegisteredModel> models, int max_concurrent_forwards)
    : models_(std::move(models)), slots_(std::clamp(max_concurrent_forwards, 1, 64)) {
  if (models_.empty()) throw Error(ErrorKind::kInvalidConfig, "service needs at least one model");
}

const RegisteredModel& SegmentService::find(const std::string& id) const {
  if (id.empty()) return models_.front();
  for (const auto& m : models_) {
    if (m.id == id) return m;
  }
  throw Error(ErrorKind::kUnknownModel, "no model registered as '" + id + "'");
}

SegmentResponse SegmentService::handle_segment(const SegmentRequest& req) const {
  const auto started = std::chrono::steady_clock::now();
  const RegisteredModel& entry = find(req.model_id);
  const PngSize size = peek_png_size(req.image_png);
  if (size.width > kMaxImageSide || size.height > kMaxImageSide) {
    throw Error(ErrorKind::kImageTooLarge, std::to_string(size.width) + "x" + std::to_string(size.height) +
                                               " exceeds " + std::to_string(kMaxImageSide));
  }
  const ImageTensor native = decode_png_rgb(req.image_png);
  const nlohmann::json doc = req.prompt.is_null() ? nlohmann::json{{"kind", "none"}} : req.prompt;
  const VisualPrompt prompt = prompt_from_json(doc, native.height(), native.width());
  const ImageTensor overlaid = render_prompt_overlay(native, prompt);
  const int side = entry.model->config().encoder.image_size;
  const ImageTensor input = resize_bilinear(overlaid, side, side);

  ClassMask small;
  {
    slots_.acquire();
    try {
      small = entry.model->predict(input);
    } catch (...) {
      slots_.release();
      throw;
    }
    slots_.release();
  }
  SegmentResponse resp;
  const ClassMask mask = resize_nearest(small, native.height(), native.width());
  resp.width = mask.width();
  resp.height = mask.height();
  resp.mask_png = encode_png_gray(mask);
  resp.contours = extract_contours(mask);
  resp.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return resp;
}

nlohmann::json response_to_json(const SegmentResponse& resp) {
  nlohmann::json contours = nlohmann::json::array();
  for (const auto& c : resp.contours) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : c) pts.push_back({p.x, p.y});
    contours.push_back(std::move(pts));
  }
  return {{"mask", base64_encode(resp.mask_png)},
          {"width", resp.width},
          {"height", resp.height},
          {"contours", contours},
          {"latency_ms", resp.latency_ms}};
}

nlohmann::json SegmentService::health() const {
  const auto& m = models_.front();
  return {{"status", "ok"}, {"model_id", m.id}, {"checkpoint_hash", m.checkpoint_hash}};
}

nlohmann::json SegmentService::models() const {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& m : models_) {
    list.push_back({{"model_id", m.id},
                    {"checkpoint_hash", m.checkpoint_hash},
                    {"image_size", m.model->config().encoder.image_size}});
  }
  return {{"models", list}};
}

SegmentService::HttpReply SegmentService::handle_segment_json(const std::string& body) const {
  auto fail = [](int status, const std::string& kind, const std::string& message) {
    return HttpReply{status, {{"error", kind}, {"message", message}}};
  };
  try {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      return fail(400, "InvalidRequest", std::string("body is not JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("image") || !doc["image"].is_string()) {
      return fail(400, "InvalidRequest", "request needs a base64 'image' string");
    }
    SegmentRequest req;
    req.image_png = base64_decode(doc["image"].get<std::string>());
    if (doc.contains("prompt")) req.prompt = doc["prompt"];
    if (doc.contains("model_id")) {
      if (!doc["model_id"].is_string()) return fail(400, "InvalidRequest", "'model_id' must be a string");
      req.model_id = doc["model_id"].get<std::string>();
    }
    return HttpReply{200, response_to_json(handle_segment(req))};
  } catch (const Error& e) {
    return fail(http_status(e.kind()), std::string(to_string(e.kind())), e.what());
  } catch (const std::exception& e) {
    return fail(500, "InferenceFailure", e.what());
  }
}

}  // namespace pdzseg
