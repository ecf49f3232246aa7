#include "icp/session.h"

#include <openssl/rand.h>

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <fstream>

#include <nlohmann/json.hpp>

#include "icp/corpus.h"
#include "icp/error.h"
#include "icp/lexicon.h"
#include "icp/text.h"

namespace icp {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const char* kLogFile = "sessions.log";
const char* kSnapshotFile = "snapshot.json";

std::int64_t to_ms(SystemClock::time_point t) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
}

SystemClock::time_point from_ms(std::int64_t ms) {
  return SystemClock::time_point(std::chrono::milliseconds(ms));
}

}  // namespace

std::string to_string(SessionState s) {
  switch (s) {
    case SessionState::AwaitingAnswer: return "awaiting_answer";
    case SessionState::Completed: return "completed";
    case SessionState::Failed: return "failed";
    case SessionState::Expired: return "expired";
  }
  return "";
}

SessionState parse_session_state(std::string_view s) {
  for (auto st : {SessionState::AwaitingAnswer, SessionState::Completed, SessionState::Failed,
                  SessionState::Expired})
    if (to_string(st) == s) return st;
  throw ConfigError("unknown session state '" + std::string(s) + "'");
}

std::string iso_utc(SystemClock::time_point t) {
  auto ms = to_ms(t);
  std::time_t secs = static_cast<std::time_t>(ms / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[40];
  std::size_t n = std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  std::snprintf(buf + n, sizeof buf - n, ".%03dZ", static_cast<int>(ms % 1000));
  return buf;
}

std::string new_session_id() {
  unsigned char bytes[16];
  if (RAND_bytes(bytes, sizeof bytes) != 1) throw RuntimeFailure("CSPRNG unavailable");
  return to_hex(bytes, sizeof bytes);
}

json to_json(const Session& s) {
  json transcript = json::array();
  for (const auto& r : s.chain.stages)
    transcript.push_back({{"stage", to_string(r.stage)},
                          {"template_id", r.template_id},
                          {"prompt_hash", r.prompt_hash},
                          {"backend_id", r.completion.backend_id},
                          {"text", r.completion.text}});
  json j{{"session_id", s.session_id},
         {"state", to_string(s.state)},
         {"source", s.source},
         {"target_lang", s.target_lang},
         {"backend_id", s.backend_id},
         {"templates", {{"ask", s.ask_template}, {"translate", s.translate_template}}},
         {"question", s.chain.question.empty() ? json(nullptr) : json(s.chain.question)},
         {"answer", s.chain.answer.empty() ? json(nullptr) : json(s.chain.answer)},
         {"translation", s.chain.translation.empty() ? json(nullptr) : json(s.chain.translation)},
         {"created_at", iso_utc(s.created_at)},
         {"expires_at", iso_utc(s.expires_at)},
         {"transcript", transcript}};
  if (s.state == SessionState::Failed && s.chain.failed_stage)
    j["failure"] = {{"stage", to_string(*s.chain.failed_stage)}, {"reason", s.chain.failure_reason}};
  return j;
}

json session_record(const Session& s) {
  json j = to_json(s);
  j["created_at_ms"] = to_ms(s.created_at);
  j["expires_at_ms"] = to_ms(s.expires_at);
  j["chain"] = to_json(s.chain, true);
  return j;
}

Session session_from_record(const json& j) {
  try {
    Session s;
    s.session_id = j.at("session_id").get<std::string>();
    s.state = parse_session_state(j.at("state").get<std::string>());
    s.source = j.at("source").get<std::string>();
    s.target_lang = j.at("target_lang").get<std::string>();
    s.backend_id = j.at("backend_id").get<std::string>();
    s.ask_template = j.at("templates").at("ask").get<std::string>();
    s.translate_template = j.at("templates").at("translate").get<std::string>();
    s.created_at = from_ms(j.at("created_at_ms").get<std::int64_t>());
    s.expires_at = from_ms(j.at("expires_at_ms").get<std::int64_t>());
    s.chain = chain_from_json(j.at("chain"));
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed session record: ") + e.what());
  }
}

SessionService::SessionService(SessionServiceOptions opts) : opts_(std::move(opts)) {
  if (!opts_.clock) opts_.clock = [] { return SystemClock::now(); };
  if (opts_.ttl.count() <= 0) throw ConfigError("session ttl must be positive");
  if (opts_.snapshot_every == 0) throw ConfigError("snapshot_every must be >= 1");
  registry_ = opts_.template_dir.empty() ? builtin_templates()
                                         : builtin_with_overrides(opts_.template_dir);
  if (opts_.translators.empty()) throw ConfigError("no translator backend configured");
  for (const auto& spec : opts_.translators) {
    if (spec.kind == BackendKind::HumanPending)
      throw ConfigError("backend " + spec.backend_id + " cannot translate");
    if (backends_.count(spec.backend_id)) throw DuplicateId("backend " + spec.backend_id);
    backends_[spec.backend_id] = make_backend(spec);
    backend_ids_.push_back(spec.backend_id);
  }
  if (opts_.default_backend.empty()) opts_.default_backend = backend_ids_.front();
  if (!backends_.count(opts_.default_backend))
    throw ConfigError("default backend " + opts_.default_backend + " is not configured");
  if (!opts_.state_dir.empty()) {
    fs::create_directories(opts_.state_dir);
    recover();
  }
}

SessionService::~SessionService() = default;

SystemClock::time_point SessionService::now() const { return opts_.clock(); }

void SessionService::recover() {
  std::size_t covered = 0;
  auto snap = opts_.state_dir / kSnapshotFile;
  auto load = [&](const json& rec) {
    auto s = session_from_record(rec);
    auto e = std::make_shared<Entry>();
    e->session = std::move(s);
    index_[e->session.session_id] = e;
  };
  if (fs::exists(snap)) {
    try {
      auto j = json::parse(read_text_file(snap));
      covered = j.at("log_records").get<std::size_t>();
      for (const auto& rec : j.at("sessions")) load(rec);
    } catch (const json::exception& e) {
      throw ConfigError(snap.string() + ": " + e.what());
    }
  }
  auto log = opts_.state_dir / kLogFile;
  if (!fs::exists(log)) return;
  auto content = read_text_file(log);
  if (!content.empty() && content.back() != '\n') {
    // Torn final append: drop it so the next record starts on a fresh line.
    content.resize(content.rfind('\n') == std::string::npos ? 0 : content.rfind('\n') + 1);
    fs::resize_file(log, content.size());
  }
  std::size_t n = 0, lineno = 0;
  for (const auto& line : split(content, '\n')) {
    ++lineno;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(lineno, e.what());
    }
    if (++n > covered) load(rec);
  }
  log_records_ = n;
  since_snapshot_ = n - std::min(n, covered);
}

void SessionService::store(const Session& s) {
  if (opts_.state_dir.empty()) return;
  std::lock_guard lock(log_mu_);
  std::ofstream out(opts_.state_dir / kLogFile, std::ios::binary | std::ios::app);
  out << session_record(s).dump() << "\n";
  out.flush();
  if (!out) throw IoError("cannot append to the session log");
  ++log_records_;
  if (++since_snapshot_ >= opts_.snapshot_every) snapshot_due_ = true;
}

void SessionService::maybe_snapshot() {
  if (snapshot_due_.exchange(false)) snapshot();
}

void SessionService::snapshot() {
  if (opts_.state_dir.empty()) return;
  std::lock_guard snap_lock(snapshot_mu_);
  // Read the count first: records appended while copying are replayed on
  // boot over the copies, and the last record per session wins.
  std::size_t covered;
  {
    std::lock_guard lock(log_mu_);
    covered = log_records_;
    since_snapshot_ = 0;
  }
  std::vector<std::shared_ptr<Entry>> entries;
  {
    std::lock_guard lock(index_mu_);
    for (const auto& [id, e] : index_) entries.push_back(e);
  }
  json sessions = json::array();
  for (const auto& e : entries) {
    std::lock_guard elock(e->mu);
    sessions.push_back(session_record(e->session));
  }
  json j{{"log_records", covered}, {"sessions", sessions}};
  auto tmp = opts_.state_dir / (std::string(kSnapshotFile) + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << j.dump() << "\n";
    if (!out) throw IoError("cannot write " + tmp.string());
  }
  fs::rename(tmp, opts_.state_dir / kSnapshotFile);
}

std::size_t SessionService::log_records() const {
  std::lock_guard lock(log_mu_);
  return log_records_;
}

bool SessionService::expire_if_due(Session& s) {
  if (s.state != SessionState::AwaitingAnswer || now() < s.expires_at) return false;
  s.state = SessionState::Expired;
  store(s);
  return true;
}

std::shared_ptr<SessionService::Entry> SessionService::find(const std::string& id) {
  std::lock_guard lock(index_mu_);
  auto it = index_.find(id);
  if (it == index_.end()) throw SessionNotFound("no session '" + id + "'");
  return it->second;
}

Session SessionService::create(const CreateRequest& req) {
  if (trim(req.source).empty()) throw EmptySlot("source text is empty");
  auto lang = to_lower(trim(req.target_lang));
  lang_pair_for_target(lang);  // UnsupportedLanguage
  auto backend_id = req.backend_id.empty() ? opts_.default_backend : req.backend_id;
  auto b = backends_.find(backend_id);
  if (b == backends_.end()) throw ConfigError("unknown backend '" + backend_id + "'");

  auto defaults = default_chain_templates(lang, req.ambiguity.value_or(AmbiguityType::ItResolution));
  Session s;
  s.ask_template = req.ask_template.empty() ? defaults.ask_id : req.ask_template;
  s.translate_template = req.translate_template.empty() ? defaults.translate_id : req.translate_template;
  const auto& ask = registry_.get(s.ask_template);
  const auto& translate = registry_.get(s.translate_template);
  if (ask.stage != Stage::Ask || translate.stage != Stage::Translate)
    throw StageMismatch("session templates must be an ask and a translate template");
  if (!ask.matches_lang(lang) || !translate.matches_lang(lang))
    throw UnsupportedLanguage("templates do not serve target language '" + lang + "'");

  s.session_id = new_session_id();
  s.source = std::string(trim(req.source));
  s.target_lang = lang;
  s.backend_id = backend_id;
  s.created_at = now();
  s.expires_at = s.created_at + opts_.ttl;
  s.chain.sample_id = s.session_id;
  s.chain.mode = ChainMode::Icp;

  bool ok = run_ask_stage(s.chain, *b->second, ask, s.source);
  if (!ok) s.state = SessionState::Failed;
  {
    auto e = std::make_shared<Entry>();
    e->session = s;
    std::lock_guard lock(index_mu_);
    index_[s.session_id] = e;
  }
  store(s);
  maybe_snapshot();
  if (!ok) throw BackendUnavailable("translator " + backend_id + " asked no question: " +
                                    s.chain.failure_reason);
  return s;
}

Session SessionService::submit_answer(const std::string& session_id, const std::string& answer) {
  auto e = find(session_id);
  std::unique_lock lock(e->mu);
  Session& s = e->session;
  if (expire_if_due(s)) {
    lock.unlock();
    maybe_snapshot();
    throw SessionConflict("session_expired", "session " + session_id + " has expired");
  }
  switch (s.state) {
    case SessionState::AwaitingAnswer: break;
    case SessionState::Completed:
      throw SessionConflict("already_answered", "session " + session_id + " is already answered");
    case SessionState::Expired:
      throw SessionConflict("session_expired", "session " + session_id + " has expired");
    case SessionState::Failed:
      throw SessionConflict("session_failed", "session " + session_id + " has failed");
  }
  auto text = std::string(trim(answer));
  if (text.empty()) throw EmptySlot("answer is empty");

  s.chain.answer = text;
  const auto& translate = registry_.get(s.translate_template);
  bool ok = run_translate_stage(s.chain, *backends_.at(s.backend_id), translate, s.source);
  s.state = ok ? SessionState::Completed : SessionState::Failed;
  store(s);
  Session out = s;
  lock.unlock();
  maybe_snapshot();
  if (!ok) throw BackendUnavailable("translation failed: " + out.chain.failure_reason);
  return out;
}

Session SessionService::get(const std::string& session_id) {
  auto e = find(session_id);
  Session out;
  {
    std::lock_guard lock(e->mu);
    expire_if_due(e->session);
    out = e->session;
  }
  maybe_snapshot();
  return out;
}

std::size_t SessionService::expire_overdue() {
  std::vector<std::shared_ptr<Entry>> entries;
  {
    std::lock_guard lock(index_mu_);
    for (const auto& [id, e] : index_) entries.push_back(e);
  }
  std::size_t n = 0;
  for (const auto& e : entries) {
    std::lock_guard lock(e->mu);
    n += expire_if_due(e->session);
  }
  maybe_snapshot();
  return n;
}

std::vector<Session> SessionService::list(std::optional<SessionState> state) {
  expire_overdue();
  std::vector<std::shared_ptr<Entry>> entries;
  {
    std::lock_guard lock(index_mu_);
    for (const auto& [id, e] : index_) entries.push_back(e);
  }
  std::vector<Session> out;
  for (const auto& e : entries) {
    std::lock_guard lock(e->mu);
    if (!state || e->session.state == *state) out.push_back(e->session);
  }
  std::sort(out.begin(), out.end(), [](const Session& a, const Session& b) {
    return std::tie(a.created_at, a.session_id) < std::tie(b.created_at, b.session_id);
  });
  return out;
}

}  // namespace icp
