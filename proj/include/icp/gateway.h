#pragma once

#include <memory>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "icp/session.h"

namespace httplib {
class Server;
}

namespace icp {

/// JSON-over-HTTP front of a SessionService.
///
///   POST /v1/sessions               {source, target_lang, [ambiguity],
///                                    [templates: {ask, translate}], [backend_id]}
///   POST /v1/sessions/{id}/answer   {answer}
///   GET  /v1/sessions/{id}
///   GET  /v1/sessions[?state=...]
///
/// Errors are {"code", "message"} with 400, 404, 409 or 502.
class Gateway {
 public:
  explicit Gateway(SessionService& sessions);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  // Port 0 binds any free port. Returns the bound port; IoError on failure.
  int bind(const std::string& host, int port);
  void listen();  // blocks until stop()
  void stop();
  bool running() const;

 private:
  void routes();

  SessionService& sessions_;
  std::unique_ptr<httplib::Server> server_;
};

struct HttpError {
  int status;
  std::string code;
  std::string message;
};

// How a library error surfaces over HTTP.
HttpError http_error_for(const std::exception& e);

}  // namespace icp
