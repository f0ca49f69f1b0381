// Eigen must be seen before httplib, whose system headers define `res`.
#include "pdzseg/service.hpp"

#include <httplib.h>

#include "pdzseg/error.hpp"

namespace pdzseg {

struct HttpServer::Impl {
  httplib::Server server;
};

HttpServer::HttpServer(const SegmentService& service, int threads) : impl_(std::make_unique<Impl>()) {
  auto& server = impl_->server;
  server.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(std::max(1, threads))); };
  server.set_payload_max_length(std::size_t{256} << 20);
  server.Post("/v1/segment", [&service](const httplib::Request& req, httplib::Response& res) {
    const auto reply = service.handle_segment_json(req.body);
    res.status = reply.status;
    res.set_content(reply.body.dump(), "application/json");
  });
  server.Get("/v1/health", [&service](const httplib::Request&, httplib::Response& res) {
    res.set_content(service.health().dump(), "application/json");
  });
  server.Get("/v1/models", [&service](const httplib::Request&, httplib::Response& res) {
    res.set_content(service.models().dump(), "application/json");
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound <= 0) throw Error(ErrorKind::kIo, "cannot listen on " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::run() {
  if (!impl_->server.listen_after_bind()) throw Error(ErrorKind::kIo, "http server stopped with an error");
}

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

void HttpServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

void serve_http(const SegmentService& service, const std::string& host, int port, int threads) {
  HttpServer server(service, threads);
  server.bind(host, port);
  server.run();
}

}  // namespace pdzseg
