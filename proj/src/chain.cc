#include "icp/chain.h"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "icp/error.h"
#include "icp/lexicon.h"
#include "icp/text.h"

namespace icp {

using nlohmann::json;

std::string to_string(ChainMode m) {
  switch (m) {
    case ChainMode::Icp: return "icp";
    case ChainMode::WithContext: return "with_context";
    case ChainMode::NoExtras: return "no_extras";
  }
  return "";
}

std::string to_string(ChainStage s) {
  switch (s) {
    case ChainStage::Ask: return "ask";
    case ChainStage::UserAnswer: return "user_answer";
    case ChainStage::Translate: return "translate";
  }
  return "";
}

std::string to_string(ChainStatus s) {
  switch (s) {
    case ChainStatus::InProgress: return "in_progress";
    case ChainStatus::Completed: return "completed";
    case ChainStatus::Failed: return "failed";
  }
  return "";
}

ChainMode parse_chain_mode(std::string_view s) {
  std::string f = fold_case(s);
  std::replace(f.begin(), f.end(), '-', '_');
  if (f == "icp") return ChainMode::Icp;
  if (f == "with_context" || f == "withcontext") return ChainMode::WithContext;
  if (f == "no_extras" || f == "noextras") return ChainMode::NoExtras;
  throw ConfigError("unknown chain mode '" + std::string(s) + "'");
}

namespace {

ChainStage parse_chain_stage(std::string_view s) {
  for (auto st : {ChainStage::Ask, ChainStage::UserAnswer, ChainStage::Translate})
    if (to_string(st) == s) return st;
  throw ConfigError("unknown chain stage '" + std::string(s) + "'");
}

ChainStatus parse_chain_status(std::string_view s) {
  for (auto st : {ChainStatus::InProgress, ChainStatus::Completed, ChainStatus::Failed})
    if (to_string(st) == s) return st;
  throw ConfigError("unknown chain status '" + std::string(s) + "'");
}

void fail(InteractionChain& chain, ChainStage stage, std::string reason) {
  chain.status = ChainStatus::Failed;
  chain.failed_stage = stage;
  chain.failure_reason = std::move(reason);
  chain.translation.clear();
}

// Calls the backend; a library error becomes a Failed chain instead of escaping.
std::optional<StageRecord> call(InteractionChain& chain, ChainStage stage, Backend& backend,
                                const PromptTemplate& tpl, const std::string& prompt) {
  try {
    StageRecord r;
    r.stage = stage;
    r.template_id = tpl.id;
    r.prompt_hash = prompt_hash(prompt, backend.spec().decode);
    r.completion = backend.complete(prompt);
    return r;
  } catch (const Error& e) {
    fail(chain, stage, e.what());
    return std::nullopt;
  }
}

void require_stage(const PromptTemplate& t, Stage want) {
  if (t.stage != want)
    throw StageMismatch("template " + t.id + " is " + to_string(t.stage) + ", need " +
                        to_string(want));
}

void require_lang(const PromptTemplate& t, const AmbiguitySample& s) {
  if (!t.matches_lang(target_lang(s.lang_pair)))
    throw UnsupportedLanguage("template " + t.id + " does not serve " + to_string(s.lang_pair));
}

}  // namespace

std::string extract_first_line(std::string_view text) {
  auto nl = text.find('\n');
  return trim(text.substr(0, nl));
}

std::string extract_first_line(const Completion& c) { return extract_first_line(c.text); }

LmUserOracle::LmUserOracle(std::shared_ptr<Backend> backend, PromptTemplate tpl)
    : backend_(std::move(backend)), tpl_(std::move(tpl)) {
  require_stage(tpl_, Stage::UserAnswer);
}

StageRecord LmUserOracle::answer(std::string_view source, std::string_view question,
                                 std::string_view context) {
  auto prompt = render_user(tpl_, source, question, context);
  StageRecord r;
  r.stage = ChainStage::UserAnswer;
  r.template_id = tpl_.id;
  r.prompt_hash = prompt_hash(prompt, backend_->spec().decode);
  r.completion = backend_->complete(prompt);
  return r;
}

ScriptedUserOracle::ScriptedUserOracle(std::map<std::string, std::string> answers,
                                       std::optional<std::string> fallback)
    : answers_(std::move(answers)), fallback_(std::move(fallback)) {}

StageRecord ScriptedUserOracle::answer(std::string_view, std::string_view question,
                                       std::string_view) {
  auto it = answers_.find(std::string(question));
  if (it == answers_.end() && !fallback_)
    throw BackendUnavailable("scripted user has no answer for '" + std::string(question) + "'");
  const std::string& text = it == answers_.end() ? *fallback_ : it->second;
  StageRecord r;
  r.stage = ChainStage::UserAnswer;
  r.completion.text = trim(text);
  r.completion.raw_text = text;
  r.completion.backend_id = "scripted-user";
  return r;
}

HumanUserOracle::HumanUserOracle(std::chrono::milliseconds timeout) : timeout_(timeout) {}

StageRecord HumanUserOracle::answer(std::string_view, std::string_view question,
                                    std::string_view) {
  std::unique_lock lock(mu_);
  question_ = std::string(question);
  reply_.reset();
  auto start = std::chrono::steady_clock::now();
  bool got = cv_.wait_for(lock, timeout_, [&] { return reply_.has_value(); });
  question_.reset();
  if (!got) throw AnswerTimeout("timeout");
  StageRecord r;
  r.stage = ChainStage::UserAnswer;
  r.completion.raw_text = *reply_;
  r.completion.text = trim(*reply_);
  r.completion.backend_id = "human";
  r.completion.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  reply_.reset();
  return r;
}

std::optional<std::string> HumanUserOracle::pending_question() const {
  std::lock_guard lock(mu_);
  return question_;
}

bool HumanUserOracle::provide(std::string answer) {
  {
    std::lock_guard lock(mu_);
    if (!question_ || reply_) return false;
    reply_ = std::move(answer);
  }
  cv_.notify_all();
  return true;
}

bool run_ask_stage(InteractionChain& chain, Backend& translator, const PromptTemplate& ask,
                   std::string_view source) {
  auto rec = call(chain, ChainStage::Ask, translator, ask, render_ask(ask, source));
  if (!rec) return false;
  chain.question = extract_first_line(rec->completion);
  chain.stages.push_back(std::move(*rec));
  if (chain.question.empty()) {
    fail(chain, ChainStage::Ask, "empty question");
    return false;
  }
  return true;
}

bool run_user_stage(InteractionChain& chain, UserOracle& user, std::string_view source,
                    std::string_view context) {
  try {
    auto rec = user.answer(source, chain.question, context);
    rec.stage = ChainStage::UserAnswer;
    chain.answer = extract_first_line(rec.completion);
    chain.stages.push_back(std::move(rec));
  } catch (const Error& e) {
    fail(chain, ChainStage::UserAnswer, e.what());
    return false;
  }
  if (chain.answer.empty()) {
    fail(chain, ChainStage::UserAnswer, "empty answer");
    return false;
  }
  return true;
}

bool run_translate_stage(InteractionChain& chain, Backend& translator,
                         const PromptTemplate& translate, std::string_view source) {
  auto rec = call(chain, ChainStage::Translate, translator, translate,
                  render_translate(translate, source, chain.question, chain.answer));
  if (!rec) return false;
  std::string text = rec->completion.text;
  chain.stages.push_back(std::move(*rec));
  if (text.empty()) {
    fail(chain, ChainStage::Translate, "empty translation");
    return false;
  }
  chain.translation = std::move(text);
  chain.status = ChainStatus::Completed;
  return true;
}

InteractionChain run_icp(Backend& translator, UserOracle& user, const PromptTemplate& ask,
                         const PromptTemplate& translate, const AmbiguitySample& sample) {
  require_stage(ask, Stage::Ask);
  require_stage(translate, Stage::Translate);
  require_lang(ask, sample);
  require_lang(translate, sample);

  InteractionChain chain;
  chain.sample_id = sample.id;
  chain.mode = ChainMode::Icp;
  run_ask_stage(chain, translator, ask, sample.source) &&
      run_user_stage(chain, user, sample.source, sample.context) &&
      run_translate_stage(chain, translator, translate, sample.source);
  return chain;
}

namespace {

std::string template_family(AmbiguityType type) {
  switch (type) {
    case AmbiguityType::Formality: return "formality";
    case AmbiguityType::Polysemy: return "polysemy";
    default: return "generalist";
  }
}

}  // namespace

ChainTemplates default_chain_templates(std::string_view lang, AmbiguityType type) {
  std::string prefix = std::string(lang) + "-" + template_family(type);
  return {prefix + "-ask", prefix + "-translate"};
}

std::string default_baseline_template(std::string_view lang, AmbiguityType type, ChainMode mode) {
  if (mode == ChainMode::Icp) throw ConfigError("no baseline template for icp mode");
  return std::string(lang) + "-" + template_family(type) +
         (mode == ChainMode::WithContext ? "-context" : "-noextras");
}

std::string default_user_template(AmbiguityType type) {
  return "user-" + template_family(type);
}

InteractionChain run_icp(const BackendSpec& translator, UserOracle& user,
                         const TemplateRegistry& templates, const ChainTemplates& ids,
                         const AmbiguitySample& sample) {
  auto backend = make_backend(translator);
  return run_icp(*backend, user, templates.get(ids.ask_id), templates.get(ids.translate_id),
                 sample);
}

InteractionChain run_baseline(Backend& backend, const PromptTemplate& tpl,
                              const AmbiguitySample& sample, ChainMode mode) {
  if (mode == ChainMode::Icp) throw ConfigError("run_baseline needs a baseline mode");
  bool with_context = mode == ChainMode::WithContext;
  require_stage(tpl, with_context ? Stage::BaselineContext : Stage::BaselineNoExtras);
  require_lang(tpl, sample);
  if (with_context && trim(sample.context).empty())
    throw NoContext("sample " + sample.id + " has no context");

  InteractionChain chain;
  chain.sample_id = sample.id;
  chain.mode = mode;
  auto prompt = render_baseline(
      tpl, sample.source, with_context ? std::optional<std::string>(sample.context) : std::nullopt);
  auto rec = call(chain, ChainStage::Translate, backend, tpl, prompt);
  if (!rec) return chain;
  std::string text = rec->completion.text;
  chain.stages.push_back(std::move(*rec));
  if (text.empty()) {
    fail(chain, ChainStage::Translate, "empty translation");
  } else {
    chain.translation = std::move(text);
    chain.status = ChainStatus::Completed;
  }
  return chain;
}

json to_json(const InteractionChain& c, bool with_timing) {
  json stages = json::array();
  for (const auto& r : c.stages) {
    json s{{"stage", to_string(r.stage)},
           {"template_id", r.template_id},
           {"prompt_hash", r.prompt_hash},
           {"backend_id", r.completion.backend_id},
           {"text", r.completion.text},
           {"raw_text", r.completion.raw_text},
           {"cached", r.completion.cached}};
    if (with_timing) s["latency_ms"] = r.completion.latency_ms;
    stages.push_back(std::move(s));
  }
  json j{{"schema", kChainSchema},
         {"sample_id", c.sample_id},
         {"mode", to_string(c.mode)},
         {"stages", std::move(stages)},
         {"translation", c.translation},
         {"status", to_string(c.status)}};
  if (c.mode == ChainMode::Icp) {
    j["question"] = c.question;
    j["answer"] = c.answer;
  }
  if (c.status == ChainStatus::Failed)
    j["failure"] = {{"stage", c.failed_stage ? to_string(*c.failed_stage) : ""},
                    {"reason", c.failure_reason}};
  return j;
}

InteractionChain chain_from_json(const json& j) {
  if (!j.is_object() || j.value("schema", "") != kChainSchema)
    throw ConfigError("not an " + std::string(kChainSchema) + " record");
  try {
    InteractionChain c;
    c.sample_id = j.at("sample_id").get<std::string>();
    c.mode = parse_chain_mode(j.at("mode").get<std::string>());
    for (const auto& s : j.at("stages")) {
      StageRecord r;
      r.stage = parse_chain_stage(s.at("stage").get<std::string>());
      r.template_id = s.value("template_id", "");
      r.prompt_hash = s.value("prompt_hash", "");
      r.completion.backend_id = s.value("backend_id", "");
      r.completion.text = s.at("text").get<std::string>();
      r.completion.raw_text = s.value("raw_text", r.completion.text);
      r.completion.cached = s.value("cached", false);
      r.completion.latency_ms = s.value("latency_ms", 0.0);
      c.stages.push_back(std::move(r));
    }
    c.question = j.value("question", "");
    c.answer = j.value("answer", "");
    c.translation = j.value("translation", "");
    c.status = parse_chain_status(j.at("status").get<std::string>());
    if (c.status == ChainStatus::Failed) {
      const auto& f = j.at("failure");
      c.failed_stage = parse_chain_stage(f.at("stage").get<std::string>());
      c.failure_reason = f.value("reason", "");
    }
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed chain record: ") + e.what());
  }
}

std::string chain_to_jsonl_line(const InteractionChain& c, bool with_timing) {
  return to_json(c, with_timing).dump() + "\n";
}

std::vector<InteractionChain> parse_transcript(std::string_view content) {
  std::vector<InteractionChain> out;
  std::size_t lineno = 0;
  for (const auto& line : split(content, '\n')) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(chain_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw FormatError(lineno, e.what());
    } catch (const ValidationError& e) {
      throw FormatError(lineno, e.what());
    }
  }
  return out;
}

std::vector<InteractionChain> read_transcript(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return {};
  return parse_transcript(read_text_file(path));
}

void append_transcript(const std::filesystem::path& path, const InteractionChain& c,
                       bool with_timing) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot append to " + path.string());
  out << chain_to_jsonl_line(c, with_timing);
  out.flush();
  if (!out) throw IoError("write failed on " + path.string());
}

}  // namespace icp
