#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace icp {

enum class BackendKind { Scripted, Replay, Http, HumanPending };

std::string to_string(BackendKind k);
BackendKind parse_backend_kind(std::string_view s);  // ConfigError

struct DecodeParams {
  double temperature = 0;
  int max_tokens = 128;
  double top_p = 1;

  void validate() const;  // ConfigError
};

/// One Scripted rule; the first rule that matches the prompt answers.
struct ScriptRule {
  enum class Match { Exact, Contains, Suffix };
  Match match = Match::Exact;
  std::string pattern;
  std::string response;
};

struct BackendSpec {
  std::string backend_id;
  BackendKind kind = BackendKind::Scripted;
  std::string model;
  DecodeParams decode;
  std::vector<std::string> stop_sequences{"\n\n", "\nS:"};
  std::size_t max_in_flight = 4;

  // Http
  std::string endpoint;   // "http://host:port/path"
  std::string auth_env;   // name of the variable holding the bearer token
  std::string adapter = "neutral";  // "neutral" or "openai"
  double timeout_s = 60;
  int max_attempts = 3;
  int backoff_ms = 250;  // doubled after each failed attempt

  // Scripted
  std::vector<ScriptRule> script;
  std::optional<std::string> script_default;

  // Replay
  std::string cache_path;
  bool strict = true;  // a miss raises BackendUnavailable; otherwise it yields ""

  void validate() const;  // ConfigError
  static BackendSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct Completion {
  std::string text;      // raw_text cut at the earliest stop sequence, then trimmed
  std::string raw_text;
  double latency_ms = 0;
  std::string backend_id;
  bool cached = false;
};

// Cut `raw` at the earliest occurrence of any stop sequence, then trim.
std::string apply_stop_sequences(std::string_view raw, const std::vector<std::string>& stops);

// Hex SHA-256 over the NFC prompt and the decode parameters.
std::string prompt_hash(std::string_view prompt, const DecodeParams& decode);

class Backend {
 public:
  explicit Backend(BackendSpec spec);
  virtual ~Backend() = default;
  Backend(const Backend&) = delete;
  Backend& operator=(const Backend&) = delete;

  // Thread-safe. At most spec().max_in_flight calls run at once.
  Completion complete(const std::string& prompt);
  const BackendSpec& spec() const { return spec_; }

 protected:
  struct Raw {
    std::string text;
    bool cached = false;
  };
  virtual Raw generate(const std::string& prompt) = 0;

 private:
  BackendSpec spec_;
  std::counting_semaphore<1024> slots_;
};

// Scripted, Replay, Http, or a HumanPending stand-in whose complete() throws
// BackendUnavailable (humans answer through the gateway).
std::unique_ptr<Backend> make_backend(const BackendSpec& spec);

// One-shot convenience over make_backend.
Completion complete(const BackendSpec& spec, const std::string& prompt);

using PromptHasher = std::function<std::string(std::string_view, const DecodeParams&)>;

/// Wraps a backend and appends {hash, prompt_len, raw_text} lines to a JSONL
/// cache. A prompt whose hash is already cached is answered from the cache
/// without calling the inner backend; a cached entry with a different
/// prompt length is a hash collision and raises CacheCorrupt.
class RecordingBackend : public Backend {
 public:
  RecordingBackend(std::unique_ptr<Backend> inner, std::filesystem::path cache_path,
                   PromptHasher hasher = prompt_hash);

 protected:
  Raw generate(const std::string& prompt) override;

 private:
  std::unique_ptr<Backend> inner_;
  std::filesystem::path path_;
  PromptHasher hasher_;
  std::mutex mu_;
  std::map<std::string, std::pair<std::size_t, std::string>> entries_;
};

// Wraps `inner` for recording and returns the Replay spec that reads the cache back.
std::unique_ptr<Backend> record(std::unique_ptr<Backend> inner,
                                const std::filesystem::path& cache_path,
                                BackendSpec* replay_spec = nullptr);

struct CacheEntry {
  std::string hash;
  std::size_t prompt_len = 0;
  std::string raw_text;
};
std::vector<CacheEntry> read_cache(const std::filesystem::path& path);  // CacheCorrupt

// Backend specs keyed by backend_id, from {"backends": [...]} or a bare array.
std::map<std::string, BackendSpec> load_backend_config(const std::filesystem::path& path);

}  // namespace icp
