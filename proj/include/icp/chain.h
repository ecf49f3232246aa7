#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "icp/ambiguity.h"
#include "icp/backend.h"
#include "icp/prompt.h"

namespace icp {

enum class ChainMode { Icp, WithContext, NoExtras };
enum class ChainStage { Ask, UserAnswer, Translate };
// InProgress only exists between stages of a chain driven step by step.
enum class ChainStatus { InProgress, Completed, Failed };

std::string to_string(ChainMode m);    // "icp", "with_context", "no_extras"
std::string to_string(ChainStage s);   // "ask", "user_answer", "translate"
std::string to_string(ChainStatus s);  // "in_progress", "completed", "failed"
ChainMode parse_chain_mode(std::string_view s);  // ConfigError

inline constexpr std::string_view kChainSchema = "icp.chain/1";

struct StageRecord {
  ChainStage stage = ChainStage::Ask;
  std::string template_id;  // empty when no prompt was rendered
  std::string prompt_hash;  // prompt_hash(prompt, decode) of the backend that answered
  Completion completion;
};

/// Transcript of one sample under one mode. Icp chains record Ask, UserAnswer
/// and Translate in that order; baselines record a single Translate stage.
/// A failed chain keeps the records of the stages that produced output.
struct InteractionChain {
  std::string sample_id;
  ChainMode mode = ChainMode::Icp;
  std::vector<StageRecord> stages;
  std::string question;
  std::string answer;
  std::string translation;
  ChainStatus status = ChainStatus::InProgress;
  std::optional<ChainStage> failed_stage;
  std::string failure_reason;

  bool completed() const { return status == ChainStatus::Completed; }
};

// First line of the completion text, trimmed. "" means nothing usable came back.
std::string extract_first_line(std::string_view text);
std::string extract_first_line(const Completion& c);

/// Stage 2 of the chain: something that answers the clarifying question.
class UserOracle {
 public:
  virtual ~UserOracle() = default;
  // Returns a UserAnswer record; the chain takes the first line of its text.
  virtual StageRecord answer(std::string_view source, std::string_view question,
                             std::string_view context) = 0;
};

// Answers through a language model with a UserAnswer template (StageMismatch otherwise).
class LmUserOracle : public UserOracle {
 public:
  LmUserOracle(std::shared_ptr<Backend> backend, PromptTemplate tpl);
  StageRecord answer(std::string_view source, std::string_view question,
                     std::string_view context) override;

 private:
  std::shared_ptr<Backend> backend_;
  PromptTemplate tpl_;
};

// Fixed answers keyed by question. Unknown questions fall back to the
// default, or raise BackendUnavailable without one.
class ScriptedUserOracle : public UserOracle {
 public:
  explicit ScriptedUserOracle(std::map<std::string, std::string> answers,
                              std::optional<std::string> fallback = std::nullopt);
  StageRecord answer(std::string_view source, std::string_view question,
                     std::string_view context) override;

 private:
  std::map<std::string, std::string> answers_;
  std::optional<std::string> fallback_;
};

/// A person answering from another thread. answer() publishes the question
/// and blocks until provide() or the timeout, which raises AnswerTimeout.
class HumanUserOracle : public UserOracle {
 public:
  explicit HumanUserOracle(std::chrono::milliseconds timeout = std::chrono::minutes(10));
  StageRecord answer(std::string_view source, std::string_view question,
                     std::string_view context) override;

  std::optional<std::string> pending_question() const;
  // False when no question is waiting.
  bool provide(std::string answer);

 private:
  std::chrono::milliseconds timeout_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::optional<std::string> question_;
  std::optional<std::string> reply_;
};

// Single stages. Each appends its record (when there is one), fills the
// chain field, and marks the chain Failed on a backend error or an empty
// extraction. They return false once the chain has failed.
bool run_ask_stage(InteractionChain& chain, Backend& translator, const PromptTemplate& ask,
                   std::string_view source);
bool run_user_stage(InteractionChain& chain, UserOracle& user, std::string_view source,
                    std::string_view context);
bool run_translate_stage(InteractionChain& chain, Backend& translator,
                         const PromptTemplate& translate, std::string_view source);

// Both templates must have the right stage and serve the sample's target
// language (StageMismatch, UnsupportedLanguage). The context reaches the
// user oracle only.
InteractionChain run_icp(Backend& translator, UserOracle& user, const PromptTemplate& ask,
                         const PromptTemplate& translate, const AmbiguitySample& sample);

struct ChainTemplates {
  std::string ask_id;
  std::string translate_id;
};
// Builtin ids for a target language: the formality and polysemy families
// have specialist templates, every other ambiguity uses the generalist ones.
ChainTemplates default_chain_templates(std::string_view lang, AmbiguityType type);
std::string default_baseline_template(std::string_view lang, AmbiguityType type, ChainMode mode);
std::string default_user_template(AmbiguityType type);

InteractionChain run_icp(const BackendSpec& translator, UserOracle& user,
                         const TemplateRegistry& templates, const ChainTemplates& ids,
                         const AmbiguitySample& sample);

// WithContext needs a non-empty sample context (NoContext) and a
// BaselineContext template; NoExtras needs a BaselineNoExtras template.
InteractionChain run_baseline(Backend& backend, const PromptTemplate& tpl,
                              const AmbiguitySample& sample, ChainMode mode);

// Timing is left out unless asked for, so scripted runs serialize identically.
nlohmann::json to_json(const InteractionChain& c, bool with_timing = false);
InteractionChain chain_from_json(const nlohmann::json& j);  // ConfigError

std::string chain_to_jsonl_line(const InteractionChain& c, bool with_timing = false);
// Lines with the wrong schema or shape raise FormatError(line).
std::vector<InteractionChain> parse_transcript(std::string_view content);
std::vector<InteractionChain> read_transcript(const std::filesystem::path& path);
void append_transcript(const std::filesystem::path& path, const InteractionChain& c,
                       bool with_timing = false);

}  // namespace icp
