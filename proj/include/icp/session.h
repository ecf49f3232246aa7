#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "icp/backend.h"
#include "icp/chain.h"
#include "icp/prompt.h"

namespace icp {

enum class SessionState { AwaitingAnswer, Completed, Failed, Expired };

std::string to_string(SessionState s);  // "awaiting_answer", ...
SessionState parse_session_state(std::string_view s);  // ConfigError

using SystemClock = std::chrono::system_clock;
using Clock = std::function<SystemClock::time_point()>;

/// One live chain with a human in the User role. The chain holds the Ask
/// and Translate records; the human answer lives in chain.answer.
struct Session {
  std::string session_id;
  SessionState state = SessionState::AwaitingAnswer;
  std::string source;
  std::string target_lang;
  std::string backend_id;
  std::string ask_template, translate_template;
  InteractionChain chain;
  SystemClock::time_point created_at, expires_at;

  const std::string& question() const { return chain.question; }
  const std::string& translation() const { return chain.translation; }
};

// API view. Never contains backend specs, only the backend id.
nlohmann::json to_json(const Session& s);
// Log form: the API view plus the full chain and millisecond timestamps.
nlohmann::json session_record(const Session& s);
Session session_from_record(const nlohmann::json& j);  // ConfigError

std::string iso_utc(SystemClock::time_point t);  // millisecond precision

// 128 random bits from the OpenSSL CSPRNG, hex encoded.
std::string new_session_id();

struct CreateRequest {
  std::string source;
  std::string target_lang;
  std::optional<AmbiguityType> ambiguity;  // picks the template family
  std::string ask_template, translate_template;  // explicit ids win
  std::string backend_id;  // empty selects the default translator
};

struct SessionServiceOptions {
  std::vector<BackendSpec> translators;
  std::string default_backend;  // first translator when empty
  std::filesystem::path template_dir;
  std::chrono::seconds ttl = std::chrono::minutes(30);
  // Empty keeps sessions in memory only.
  std::filesystem::path state_dir;
  std::size_t snapshot_every = 100;
  Clock clock;  // system clock when unset
};

/// Session core shared by the HTTP gateway and the interactive CLI.
///
/// Persistence is an append-only JSONL log (one full session record per
/// mutation) plus a snapshot rewritten every `snapshot_every` appends. The
/// snapshot stores how many log records it covers; on boot the index is the
/// snapshot plus the log tail after it. A torn last log line is ignored.
class SessionService {
 public:
  explicit SessionService(SessionServiceOptions opts);
  ~SessionService();
  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  // Runs the Ask stage. ValidationError for bad input; BackendUnavailable
  // when the translator fails or asks nothing (the session is kept as Failed).
  Session create(const CreateRequest& req);

  // Runs the Translate stage on the answer. EmptySlot on a blank answer,
  // SessionNotFound, SessionConflict unless AwaitingAnswer and unexpired,
  // BackendUnavailable when translation fails (the session becomes Failed).
  // Calls on one session serialize.
  Session submit_answer(const std::string& session_id, const std::string& answer);

  Session get(const std::string& session_id);  // SessionNotFound
  // Ordered by creation time, then id.
  std::vector<Session> list(std::optional<SessionState> state = std::nullopt);

  // Moves overdue AwaitingAnswer sessions to Expired; returns how many.
  std::size_t expire_overdue();

  void snapshot();  // IoError
  std::size_t log_records() const;

  const std::vector<std::string>& backend_ids() const { return backend_ids_; }

 private:
  struct Entry {
    std::mutex mu;
    Session session;
  };

  SystemClock::time_point now() const;
  std::shared_ptr<Entry> find(const std::string& id);
  void store(const Session& s);  // appends to the log
  void maybe_snapshot();         // call with no entry lock held
  bool expire_if_due(Session& s);
  void recover();

  SessionServiceOptions opts_;
  TemplateRegistry registry_;
  std::map<std::string, std::unique_ptr<Backend>> backends_;
  std::vector<std::string> backend_ids_;

  std::mutex index_mu_;
  std::map<std::string, std::shared_ptr<Entry>> index_;

  mutable std::mutex log_mu_;
  std::size_t log_records_ = 0;
  std::size_t since_snapshot_ = 0;
  std::atomic<bool> snapshot_due_{false};
  std::mutex snapshot_mu_;
};

}  // namespace icp
