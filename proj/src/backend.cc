#include "icp/backend.h"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <thread>

#include <httplib.h>
#include <openssl/evp.h>

#include <nlohmann/json.hpp>

#include "icp/error.h"
#include "icp/lexicon.h"
#include "icp/text.h"

namespace icp {

using nlohmann::json;

std::string to_string(BackendKind k) {
  switch (k) {
    case BackendKind::Scripted: return "scripted";
    case BackendKind::Replay: return "replay";
    case BackendKind::Http: return "http";
    case BackendKind::HumanPending: return "human";
  }
  return "";
}

BackendKind parse_backend_kind(std::string_view s) {
  for (auto k : {BackendKind::Scripted, BackendKind::Replay, BackendKind::Http,
                 BackendKind::HumanPending})
    if (to_string(k) == s) return k;
  if (s == "human_pending") return BackendKind::HumanPending;
  throw ConfigError("unknown backend kind '" + std::string(s) + "'");
}

void DecodeParams::validate() const {
  if (!(temperature >= 0)) throw ConfigError("temperature must be non-negative");
  if (max_tokens <= 0) throw ConfigError("max_tokens must be positive");
  if (!(top_p > 0 && top_p <= 1)) throw ConfigError("top_p must lie in (0, 1]");
}

void BackendSpec::validate() const {
  if (backend_id.empty()) throw ConfigError("backend id is empty");
  decode.validate();
  if (max_in_flight == 0 || max_in_flight > 1024)
    throw ConfigError("max_in_flight must lie in [1, 1024]");
  for (const auto& s : stop_sequences)
    if (s.empty()) throw ConfigError("empty stop sequence in backend " + backend_id);
  switch (kind) {
    case BackendKind::Http:
      if (!starts_with(endpoint, "http://") && !starts_with(endpoint, "https://"))
        throw ConfigError("backend " + backend_id + " needs an http(s) endpoint");
      if (auth_env.empty()) throw ConfigError("backend " + backend_id + " needs auth_env");
      if (adapter != "neutral" && adapter != "openai")
        throw ConfigError("unknown adapter '" + adapter + "'");
      if (!(timeout_s > 0) || max_attempts < 1 || backoff_ms < 0)
        throw ConfigError("backend " + backend_id + " has bad timeout/retry settings");
      break;
    case BackendKind::Replay:
      if (cache_path.empty()) throw ConfigError("replay backend " + backend_id + " needs cache_path");
      break;
    case BackendKind::Scripted:
      if (script.empty() && !script_default)
        throw ConfigError("scripted backend " + backend_id + " has no rules");
      break;
    case BackendKind::HumanPending:
      break;
  }
}

namespace {

ScriptRule::Match parse_match(const std::string& s) {
  if (s == "exact") return ScriptRule::Match::Exact;
  if (s == "contains") return ScriptRule::Match::Contains;
  if (s == "suffix") return ScriptRule::Match::Suffix;
  throw ConfigError("unknown script match '" + s + "'");
}

const char* match_name(ScriptRule::Match m) {
  switch (m) {
    case ScriptRule::Match::Exact: return "exact";
    case ScriptRule::Match::Contains: return "contains";
    case ScriptRule::Match::Suffix: return "suffix";
  }
  return "";
}

}  // namespace

BackendSpec BackendSpec::from_json(const json& j) {
  BackendSpec s;
  try {
    s.backend_id = j.contains("backend_id") ? j["backend_id"].get<std::string>()
                                            : j.at("id").get<std::string>();
    s.kind = parse_backend_kind(j.at("kind").get<std::string>());
    s.model = j.value("model", "");
    if (j.contains("decode")) {
      const auto& d = j["decode"];
      s.decode.temperature = d.value("temperature", s.decode.temperature);
      s.decode.max_tokens = d.value("max_tokens", s.decode.max_tokens);
      s.decode.top_p = d.value("top_p", s.decode.top_p);
    }
    if (j.contains("stop")) s.stop_sequences = j["stop"].get<std::vector<std::string>>();
    s.max_in_flight = j.value("max_in_flight", s.max_in_flight);
    s.endpoint = j.value("endpoint", "");
    s.auth_env = j.value("auth_env", "");
    s.adapter = j.value("adapter", s.adapter);
    s.timeout_s = j.value("timeout_s", s.timeout_s);
    s.max_attempts = j.value("max_attempts", s.max_attempts);
    s.backoff_ms = j.value("backoff_ms", s.backoff_ms);
    for (const auto& r : j.value("script", json::array()))
      s.script.push_back({parse_match(r.value("match", "exact")),
                          r.at("pattern").get<std::string>(), r.at("response").get<std::string>()});
    if (j.contains("default")) s.script_default = j["default"].get<std::string>();
    s.cache_path = j.value("cache_path", "");
    s.strict = j.value("strict", true);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("backend spec: ") + e.what());
  }
  s.validate();
  return s;
}

json BackendSpec::to_json() const {
  json j = {{"backend_id", backend_id},
            {"kind", icp::to_string(kind)},
            {"model", model},
            {"decode",
             {{"temperature", decode.temperature},
              {"max_tokens", decode.max_tokens},
              {"top_p", decode.top_p}}},
            {"stop", stop_sequences},
            {"max_in_flight", max_in_flight}};
  if (kind == BackendKind::Http) {
    j["endpoint"] = endpoint;
    j["auth_env"] = auth_env;
    j["adapter"] = adapter;
    j["timeout_s"] = timeout_s;
  }
  if (kind == BackendKind::Replay) j["cache_path"] = cache_path;
  if (kind == BackendKind::Scripted) {
    json rules = json::array();
    for (const auto& r : script)
      rules.push_back({{"match", match_name(r.match)}, {"pattern", r.pattern}, {"response", r.response}});
    j["script"] = rules;
    if (script_default) j["default"] = *script_default;
  }
  return j;
}

std::string apply_stop_sequences(std::string_view raw, const std::vector<std::string>& stops) {
  std::size_t cut = raw.size();
  for (const auto& s : stops) {
    if (s.empty()) continue;
    auto pos = raw.find(s);
    if (pos != std::string_view::npos) cut = std::min(cut, pos);
  }
  return trim(raw.substr(0, cut));
}

std::string prompt_hash(std::string_view prompt, const DecodeParams& decode) {
  std::string payload = nfc(prompt);
  payload += '\0';
  payload += json{{"temperature", decode.temperature},
                  {"max_tokens", decode.max_tokens},
                  {"top_p", decode.top_p}}
                 .dump();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(payload.data(), payload.size(), digest, &len, EVP_sha256(), nullptr))
    throw RuntimeFailure("SHA-256 failed");
  return to_hex(digest, len);
}

Backend::Backend(BackendSpec spec)
    : spec_(std::move(spec)), slots_(static_cast<std::ptrdiff_t>(spec_.max_in_flight)) {
  spec_.validate();
}

Completion Backend::complete(const std::string& prompt) {
  slots_.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{slots_};
  auto start = std::chrono::steady_clock::now();
  Raw raw = generate(prompt);
  Completion c;
  c.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  c.raw_text = std::move(raw.text);
  c.text = apply_stop_sequences(c.raw_text, spec_.stop_sequences);
  c.backend_id = spec_.backend_id;
  c.cached = raw.cached;
  return c;
}

namespace {

class ScriptedBackend : public Backend {
 public:
  using Backend::Backend;

 protected:
  Raw generate(const std::string& prompt) override {
    for (const auto& r : spec().script) {
      bool hit = false;
      switch (r.match) {
        case ScriptRule::Match::Exact: hit = prompt == r.pattern; break;
        case ScriptRule::Match::Contains: hit = prompt.find(r.pattern) != std::string::npos; break;
        case ScriptRule::Match::Suffix: hit = ends_with(prompt, r.pattern); break;
      }
      if (hit) return {r.response, false};
    }
    if (spec().script_default) return {*spec().script_default, false};
    throw BackendUnavailable("scripted backend " + spec().backend_id + " has no rule for prompt");
  }
};

std::map<std::string, CacheEntry> index_cache(const std::filesystem::path& path) {
  std::map<std::string, CacheEntry> out;
  for (auto& e : read_cache(path)) {
    auto [it, fresh] = out.emplace(e.hash, e);
    if (!fresh && (it->second.prompt_len != e.prompt_len || it->second.raw_text != e.raw_text))
      throw CacheCorrupt("cache " + path.string() + " holds two entries for hash " + e.hash);
  }
  return out;
}

class ReplayBackend : public Backend {
 public:
  explicit ReplayBackend(const BackendSpec& spec)
      : Backend(spec), entries_(index_cache(spec.cache_path)) {}

 protected:
  Raw generate(const std::string& prompt) override {
    auto it = entries_.find(prompt_hash(prompt, spec().decode));
    if (it == entries_.end()) {
      if (spec().strict)
        throw BackendUnavailable("replay cache " + spec().cache_path + " has no entry for prompt");
      return {"", true};
    }
    if (it->second.prompt_len != nfc(prompt).size())
      throw CacheCorrupt("cache entry " + it->first + " was recorded for a different prompt");
    return {it->second.raw_text, true};
  }

 private:
  std::map<std::string, CacheEntry> entries_;
};

// Upstream error bodies end up in messages the gateway returns; strip the
// credential in case the upstream echoes it, and cap the length.
std::string redact(std::string body, std::string_view secret) {
  if (!secret.empty())
    for (auto pos = body.find(secret); pos != std::string::npos; pos = body.find(secret, pos))
      body.replace(pos, secret.size(), "[redacted]");
  if (body.size() > 200) body = body.substr(0, 200) + "...";
  return body;
}

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(const BackendSpec& spec) : Backend(spec) {
    static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(spec.endpoint, m, url))
      throw ConfigError("cannot parse endpoint " + spec.endpoint);
    base_ = m[1];
    path_ = m[2].matched ? std::string(m[2]) : std::string("/");
  }

 protected:
  Raw generate(const std::string& prompt) override {
    const auto& s = spec();
    const char* token = std::getenv(s.auth_env.c_str());
    if (!token || !*token)
      throw AuthMissing("environment variable " + s.auth_env + " is not set for backend " +
                        s.backend_id);
    json body = {{"model", s.model},
                 {"prompt", prompt},
                 {"temperature", s.decode.temperature},
                 {"top_p", s.decode.top_p},
                 {"max_tokens", s.decode.max_tokens},
                 {"stop", s.stop_sequences}};
    httplib::Headers headers = {{"Authorization", std::string("Bearer ") + token}};
    std::string last_error;
    int backoff = s.backoff_ms;
    for (int attempt = 1; attempt <= s.max_attempts; ++attempt) {
      if (attempt > 1) {
        std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
        backoff *= 2;
      }
      httplib::Client cli(base_);
      auto secs = static_cast<time_t>(s.timeout_s);
      auto usecs = static_cast<time_t>((s.timeout_s - static_cast<double>(secs)) * 1e6);
      cli.set_connection_timeout(secs, usecs);
      cli.set_read_timeout(secs, usecs);
      cli.set_write_timeout(secs, usecs);
      auto res = cli.Post(path_, headers, body.dump(), "application/json");
      if (!res) {
        last_error = httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200)
        throw BackendUnavailable("backend " + s.backend_id + " answered HTTP " +
                                 std::to_string(res->status) + ": " + redact(res->body, token));
      try {
        json r = json::parse(res->body);
        if (s.adapter == "openai") return {r.at("choices").at(0).at("text").get<std::string>(), false};
        return {r.at("text").get<std::string>(), false};
      } catch (const json::exception& e) {
        throw BackendUnavailable("backend " + s.backend_id + " sent a malformed reply: " + e.what());
      }
    }
    throw BackendUnavailable("backend " + s.backend_id + " failed after " +
                             std::to_string(s.max_attempts) + " attempts: " + last_error);
  }

 private:
  std::string base_;
  std::string path_;
};

class HumanPendingBackend : public Backend {
 public:
  using Backend::Backend;

 protected:
  Raw generate(const std::string&) override {
    throw BackendUnavailable("backend " + spec().backend_id +
                             " is a human channel; answers arrive through the gateway");
  }
};

}  // namespace

std::unique_ptr<Backend> make_backend(const BackendSpec& spec) {
  switch (spec.kind) {
    case BackendKind::Scripted: return std::make_unique<ScriptedBackend>(spec);
    case BackendKind::Replay: return std::make_unique<ReplayBackend>(spec);
    case BackendKind::Http: return std::make_unique<HttpBackend>(spec);
    case BackendKind::HumanPending: return std::make_unique<HumanPendingBackend>(spec);
  }
  throw ConfigError("unknown backend kind");
}

Completion complete(const BackendSpec& spec, const std::string& prompt) {
  return make_backend(spec)->complete(prompt);
}

std::vector<CacheEntry> read_cache(const std::filesystem::path& path) {
  std::vector<CacheEntry> out;
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return out;
  std::string content = read_text_file(path);
  std::size_t line_no = 0;
  for (const auto& line : split(content, '\n')) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      json j = json::parse(line);
      out.push_back({j.at("hash").get<std::string>(), j.at("prompt_len").get<std::size_t>(),
                     j.at("raw_text").get<std::string>()});
    } catch (const json::exception& e) {
      throw CacheCorrupt(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

RecordingBackend::RecordingBackend(std::unique_ptr<Backend> inner, std::filesystem::path cache_path,
                                   PromptHasher hasher)
    : Backend(inner->spec()), inner_(std::move(inner)), path_(std::move(cache_path)),
      hasher_(std::move(hasher)) {
  for (auto& [h, e] : index_cache(path_)) entries_[h] = {e.prompt_len, e.raw_text};
}

Backend::Raw RecordingBackend::generate(const std::string& prompt) {
  std::string h = hasher_(prompt, spec().decode);
  std::size_t len = nfc(prompt).size();
  {
    std::lock_guard lock(mu_);
    auto it = entries_.find(h);
    if (it != entries_.end()) {
      if (it->second.first != len)
        throw CacheCorrupt("hash " + h + " already records a prompt of " +
                           std::to_string(it->second.first) + " bytes, this one has " +
                           std::to_string(len));
      return {it->second.second, true};
    }
  }
  std::string raw = inner_->complete(prompt).raw_text;
  std::lock_guard lock(mu_);
  auto [it, fresh] = entries_.emplace(h, std::make_pair(len, raw));
  if (!fresh) return {it->second.second, true};  // a concurrent call recorded it first
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot append to " + path_.string());
  out << json{{"hash", h}, {"prompt_len", len}, {"raw_text", raw}}.dump() << '\n';
  out.flush();
  return {raw, false};
}

std::unique_ptr<Backend> record(std::unique_ptr<Backend> inner,
                                const std::filesystem::path& cache_path,
                                BackendSpec* replay_spec) {
  if (replay_spec) {
    BackendSpec r = inner->spec();
    r.backend_id = inner->spec().backend_id + "-replay";
    r.kind = BackendKind::Replay;
    r.cache_path = cache_path.string();
    r.strict = true;
    *replay_spec = r;
  }
  return std::make_unique<RecordingBackend>(std::move(inner), cache_path);
}

std::map<std::string, BackendSpec> load_backend_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  const json& list = j.is_array() ? j : j.value("backends", json::array());
  std::map<std::string, BackendSpec> out;
  for (const auto& b : list) {
    auto spec = BackendSpec::from_json(b);
    if (!out.emplace(spec.backend_id, spec).second)
      throw DuplicateId("backend id '" + spec.backend_id + "' defined twice");
  }
  return out;
}

}  // namespace icp
