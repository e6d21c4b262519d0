#pragma once

// HTTP transport for SessionManager. Every /sessions request is forwarded to
// SessionManager::dispatch; bodies and responses are JSON.

#include <string>

#include "httplib.h"
#include "mdt/session.hpp"

namespace mdt::session {

class HttpServer {
 public:
  explicit HttpServer(SessionManager& manager, std::string static_dir = {})
      : manager_(manager) {
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
      const Response r = manager_.dispatch(req.method, req.path, req.body);
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    server_.Get(R"(/sessions(/.*)?)", handler);
    server_.Post(R"(/sessions(/.*)?)", handler);
    if (!static_dir.empty()) server_.set_mount_point("/", static_dir);
  }

  /// Binds to `host`; port 0 picks a free port. Returns the bound port or -1.
  int bind(const std::string& host, int port) {
    if (port == 0) return server_.bind_to_any_port(host);
    return server_.bind_to_port(host, port) ? port : -1;
  }

  /// Serves until stop(); blocks the calling thread.
  bool serve() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

 private:
  SessionManager& manager_;
  httplib::Server server_;
};

}  // namespace mdt::session
