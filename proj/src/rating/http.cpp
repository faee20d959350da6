#include "restorer/rating/http.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

namespace restorer::rating {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

json session_json(const SessionView& v) {
  return {{"session_id", v.session_id},
          {"total", v.total},
          {"rated", v.rated},
          {"next_index", v.next_index},
          {"complete", v.complete()}};
}

std::size_t parse_index(const std::string& s) {
  if (s.empty() || s.size() > 9 || s.find_first_not_of("0123456789") != std::string::npos)
    throw RatingError(ErrorKind::NotFound, "playlist index out of range");
  return std::stoul(s);
}

json parse_body(const httplib::Request& req) {
  try {
    auto j = json::parse(req.body);
    if (!j.is_object()) throw RatingError(ErrorKind::Invalid, "request body must be a JSON object");
    return j;
  } catch (const json::exception&) {
    throw RatingError(ErrorKind::Invalid, "request body is not valid JSON");
  }
}

std::string string_field(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string()) throw RatingError(ErrorKind::Invalid, std::string("missing string field ") + key);
  return j[key].get<std::string>();
}

}  // namespace

struct HttpServer::Impl {
  RatingService& service;
  std::string admin_token;
  httplib::Server server;

  Impl(RatingService& s, std::string token) : service(s), admin_token(std::move(token)) {}

  // Wraps a handler so service errors map to their HTTP status codes.
  template <class F>
  httplib::Server::Handler guarded(F f) {
    return [f = std::move(f)](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const RatingError& e) {
        send_error(res, e.http_status(), e.what());
      } catch (const std::exception& e) {
        spdlog::error("{} {}: {}", req.method, req.path, e.what());
        send_error(res, 500, "internal error");
      }
    };
  }

  void require_admin(const httplib::Request& req) const {
    if (admin_token.empty()) throw RatingError(ErrorKind::Unauthorized, "export disabled: no admin token configured");
    if (req.get_header_value("Authorization") != "Bearer " + admin_token)
      throw RatingError(ErrorKind::Unauthorized, "admin token required");
  }

  void routes() {
    server.Post("/api/studies/:study/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const auto body = parse_body(req);
                  const auto v = service.create_session(req.path_params.at("study"), string_field(body, "rater_id"));
                  send_json(res, 200, session_json(v));
                }));
    server.Get("/api/sessions/:session", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 send_json(res, 200, session_json(service.session(req.path_params.at("session"))));
               }));
    server.Get("/api/sessions/:session/entries/:index",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const auto& sid = req.path_params.at("session");
                 const auto e = service.entry(sid, parse_index(req.path_params.at("index")));
                 send_json(res, 200,
                           {{"index", e.index},
                            {"total", e.total},
                            {"token", e.token},
                            {"rated", e.rated},
                            {"audio_url", "/api/sessions/" + sid + "/entries/" + std::to_string(e.index) + "/audio"}});
               }));
    server.Get("/api/sessions/:session/entries/:index/audio",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 auto clip = service.serve_clip(req.path_params.at("session"), parse_index(req.path_params.at("index")));
                 res.status = 200;
                 res.set_header("X-Clip-Token", clip.token);
                 res.set_header("Cache-Control", "no-store");
                 res.set_content(std::string(clip.bytes.begin(), clip.bytes.end()), "audio/wav");
               }));
    server.Post("/api/sessions/:session/ratings", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const auto body = parse_body(req);
                  if (!body.contains("score")) throw RatingError(ErrorKind::Invalid, "missing field score");
                  const auto v = service.submit_rating(req.path_params.at("session"), string_field(body, "token"),
                                                       body["score"]);
                  send_json(res, 200, session_json(v));
                }));
    server.Get("/api/studies/:study/export", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 require_admin(req);
                 const auto ex = service.export_ratings(req.path_params.at("study"));
                 std::string body;
                 for (const auto& r : ex.records) body += eval::to_json(r).dump() + "\n";
                 res.status = 200;
                 res.set_header("X-Missing-Count", std::to_string(ex.missing.size()));
                 res.set_content(body, "application/x-ndjson");
               }));
    server.Get("/api/studies/:study/completeness",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 require_admin(req);
                 const auto ex = service.export_ratings(req.path_params.at("study"));
                 send_json(res, 200,
                           {{"records", ex.records.size()}, {"missing", ex.missing}, {"complete", ex.missing.empty()}});
               }));
    server.Post("/api/sessions/:session/expire", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  require_admin(req);
                  service.expire_session(req.path_params.at("session"));
                  send_json(res, 200, {{"expired", true}});
                }));
  }
};

HttpServer::HttpServer(RatingService& service, std::string admin_token)
    : impl_(std::make_unique<Impl>(service, std::move(admin_token))) {
  impl_->routes();
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool HttpServer::listen() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace restorer::rating
