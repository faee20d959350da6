#pragma once

#include <memory>
#include <string>

#include "restorer/rating/service.hpp"

namespace restorer::rating {

// HTTP+JSON front end of a RatingService. Export endpoints require
// "Authorization: Bearer <admin_token>" and are disabled when the token is empty.
class HttpServer {
 public:
  HttpServer(RatingService& service, std::string admin_token);
  ~HttpServer();

  /// Binds to host:port (port 0 picks a free one) and returns the bound port, or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  bool listen();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace restorer::rating
