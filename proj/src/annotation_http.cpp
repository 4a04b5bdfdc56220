#include "depthkit/annotation_http.hpp"

#include <httplib.h>

#include "depthkit/depthio.hpp"
#include "depthkit/error.hpp"

namespace depthkit {

using nlohmann::json;

namespace {

int http_status(ErrorCode code) {
  switch (code) {
  case ErrorCode::UnknownAnnotator: return 403;
  case ErrorCode::UnknownPair:
  case ErrorCode::MissingFile: return 404;
  case ErrorCode::LeaseExpired:
  case ErrorCode::DuplicateSubmission: return 409;
  case ErrorCode::InvalidArgument:
  case ErrorCode::MalformedHeader: return 400;
  default: return 500;
  }
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
  send_json(res, json{{"code", to_string(code)}, {"message", message}}, http_status(code));
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_error(res, e.code(), e.detail());
    } catch (const json::exception& e) {
      send_error(res, ErrorCode::InvalidArgument, std::string("bad request body: ") + e.what());
    } catch (const std::exception& e) {
      send_json(res, json{{"code", "Internal"}, {"message", e.what()}}, 500);
    }
  };
}

std::string required_annotator(const httplib::Request& req, const json* body) {
  if (body && body->contains("annotator")) return body->at("annotator").get<std::string>();
  if (req.has_param("annotator")) return req.get_param_value("annotator");
  throw Error(ErrorCode::InvalidArgument, "missing 'annotator'");
}

json public_pair(const PointPair& p) {
  // labels stay hidden so verifiers annotate blind
  return json{{"pair_id", p.pair_id},
              {"image_id", p.image_id},
              {"p1", {p.p1.x, p.p1.y}},
              {"p2", {p.p2.x, p.p2.y}},
              {"scenario", to_string(p.scenario)}};
}

json state_summary(const PairState& ps) {
  json j{{"pair_id", ps.pair.pair_id}, {"status", to_string(ps.status)}};
  if (ps.status == PairStatus::Finalized) j["label"] = to_string(ps.label);
  if (ps.status == PairStatus::Discarded) j["reason"] = to_string(ps.reason);
  return j;
}

std::string content_type_for(const std::filesystem::path& p) {
  const std::string ext = p.extension().string();
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  return "application/octet-stream";
}

} // namespace

AnnotationServer::AnnotationServer(AnnotationService& service, ServerOptions opts)
    : service_(service), opts_(std::move(opts)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

AnnotationServer::~AnnotationServer() { stop(); }

void AnnotationServer::install_routes() {
  httplib::Server& s = *server_;

  s.Post("/api/register", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const json body = req.body.empty() ? json::object() : json::parse(req.body);
    const std::string id = required_annotator(req, &body);
    service_.register_annotator(id);
    send_json(res, json{{"annotator", id}, {"registered", true}});
  }));

  s.Get("/api/next", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = required_annotator(req, nullptr);
    auto claim = service_.claim_next(id);
    if (!claim) {
      send_json(res, json{{"available", false}});
      return;
    }
    send_json(res, json{{"available", true},
                        {"pair", public_pair(claim->pair)},
                        {"role", to_string(claim->role)},
                        {"lease_expires_ms", claim->lease_expiry_ms}});
  }));

  s.Post("/api/submit", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const json body = json::parse(req.body);
    const std::string id = required_annotator(req, &body);
    const PairState ps = service_.submit(id, body.at("pair_id").get<std::string>(),
                                         decision_from_string(body.at("decision").get<std::string>()));
    send_json(res, state_summary(ps));
  }));

  s.Get("/api/progress", guarded([this](const httplib::Request&, httplib::Response& res) {
    send_json(res, to_json(*service_.progress()));
  }));

  s.Get(R"(/api/pair/([^/]+)/image)",
        guarded([this](const httplib::Request& req, httplib::Response& res) {
          const std::string pair_id = req.matches[1];
          auto pair = service_.find_pair(pair_id);
          if (!pair) throw Error(ErrorCode::UnknownPair, "no queued pair '" + pair_id + "'");
          auto it = opts_.images.find(pair->image_id);
          if (it == opts_.images.end()) {
            throw Error(ErrorCode::MissingFile, "no image for '" + pair->image_id + "'");
          }
          const auto bytes = read_file(it->second);
          res.set_header("X-Pair-Id", pair->pair_id);
          res.set_header("X-Pair-P1", std::to_string(pair->p1.x) + "," + std::to_string(pair->p1.y));
          res.set_header("X-Pair-P2", std::to_string(pair->p2.x) + "," + std::to_string(pair->p2.y));
          res.set_content(std::string(bytes.begin(), bytes.end()), content_type_for(it->second));
        }));

  if (opts_.static_dir) s.set_mount_point("/", opts_.static_dir->string());
}

int AnnotationServer::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) {
    throw Error(ErrorCode::IoFailure, "cannot bind " + host + ":" + std::to_string(port));
  }
  return bound;
}

void AnnotationServer::listen() { server_->listen_after_bind(); }

void AnnotationServer::start() {
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void AnnotationServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

} // namespace depthkit
