#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "depthkit/annotation.hpp"

namespace httplib {
class Server;
}

namespace depthkit {

struct ServerOptions {
  /// image_id -> image file served by GET /api/pair/{id}/image.
  std::map<std::string, std::filesystem::path, std::less<>> images;
  /// Optional directory served at "/" (the annotation front end).
  std::optional<std::filesystem::path> static_dir;
};

/// JSON API over an AnnotationService:
///   GET  /api/next?annotator=ID
///   POST /api/submit      {"pair_id", "decision", "annotator"}
///   GET  /api/progress
///   GET  /api/pair/{id}/image
///   POST /api/register    {"annotator"}
/// Errors are {"code": "<ErrorCode>", "message": "..."}.
class AnnotationServer {
public:
  AnnotationServer(AnnotationService& service, ServerOptions opts = {});
  ~AnnotationServer();

  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  /// Binds to host:port; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves on the calling thread until stop().
  void listen();
  /// Serves on a background thread.
  void start();
  void stop();

private:
  void install_routes();

  AnnotationService& service_;
  ServerOptions opts_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

} // namespace depthkit
