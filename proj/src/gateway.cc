#include "icp/gateway.h"

#include <httplib.h>

#include <nlohmann/json.hpp>

#include "icp/error.h"
#include "icp/text.h"

namespace icp {

using nlohmann::json;

HttpError http_error_for(const std::exception& e) {
  std::string msg = e.what();
  if (auto c = dynamic_cast<const SessionConflict*>(&e)) return {409, c->code(), msg};
  if (dynamic_cast<const SessionNotFound*>(&e)) return {404, "not_found", msg};
  if (dynamic_cast<const UnsupportedLanguage*>(&e)) return {400, "unsupported_language", msg};
  if (dynamic_cast<const UnknownTemplate*>(&e)) return {400, "unknown_template", msg};
  if (dynamic_cast<const EmptySlot*>(&e)) return {400, "empty_field", msg};
  if (dynamic_cast<const ValidationError*>(&e)) return {400, "invalid_request", msg};
  if (dynamic_cast<const IoError*>(&e)) return {500, "internal", "session store unavailable"};
  if (dynamic_cast<const RuntimeFailure*>(&e)) return {502, "backend_unavailable", msg};
  return {500, "internal", "internal error"};
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const HttpError& err) {
  send_json(res, err.status, {{"code", err.code}, {"message", err.message}});
}

json parse_body(const httplib::Request& req) {
  try {
    auto j = json::parse(req.body);
    if (!j.is_object()) throw ConfigError("request body must be a JSON object");
    return j;
  } catch (const json::parse_error&) {
    throw ConfigError("request body is not valid JSON");
  }
}

std::string string_field(const json& j, const char* key, bool required) {
  if (!j.contains(key) || j[key].is_null()) {
    if (required) throw ConfigError(std::string("missing field '") + key + "'");
    return {};
  }
  if (!j[key].is_string()) throw ConfigError(std::string("field '") + key + "' must be a string");
  return j[key].get<std::string>();
}

// Runs a handler, mapping library errors to {code, message}.
template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    send_error(res, http_error_for(e));
  }
}

}  // namespace

Gateway::Gateway(SessionService& sessions)
    : sessions_(sessions), server_(std::make_unique<httplib::Server>()) {
  routes();
}

Gateway::~Gateway() { stop(); }

void Gateway::routes() {
  auto& srv = *server_;

  srv.Post("/v1/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto body = parse_body(req);
      CreateRequest cr;
      cr.source = string_field(body, "source", true);
      cr.target_lang = string_field(body, "target_lang", true);
      cr.backend_id = string_field(body, "backend_id", false);
      if (auto a = string_field(body, "ambiguity", false); !a.empty())
        cr.ambiguity = parse_ambiguity_type(a);
      if (body.contains("templates")) {
        const auto& t = body["templates"];
        if (!t.is_object()) throw ConfigError("field 'templates' must be an object");
        cr.ask_template = string_field(t, "ask", false);
        cr.translate_template = string_field(t, "translate", false);
      }
      send_json(res, 201, to_json(sessions_.create(cr)));
    });
  });

  srv.Post(R"(/v1/sessions/([^/]+)/answer)",
           [this](const httplib::Request& req, httplib::Response& res) {
             guarded(res, [&] {
               auto body = parse_body(req);
               auto answer = string_field(body, "answer", true);
               send_json(res, 200, to_json(sessions_.submit_answer(req.matches[1], answer)));
             });
           });

  srv.Get(R"(/v1/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, to_json(sessions_.get(req.matches[1]))); });
  });

  srv.Get("/v1/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      std::optional<SessionState> state;
      if (req.has_param("state")) state = parse_session_state(req.get_param_value("state"));
      json list = json::array();
      for (const auto& s : sessions_.list(state)) list.push_back(to_json(s));
      send_json(res, 200, {{"sessions", list}});
    });
  });

  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    if (res.status == 404) send_error(res, {404, "not_found", "no such endpoint"});
    else if (res.status == 405) send_error(res, {405, "method_not_allowed", "method not allowed"});
  });
}

int Gateway::bind(const std::string& host, int port) {
  int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void Gateway::listen() { server_->listen_after_bind(); }

void Gateway::stop() {
  if (server_) server_->stop();
}

bool Gateway::running() const { return server_->is_running(); }

}  // namespace icp
