#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "icp/ambiguity.h"
#include "icp/backend.h"
#include "icp/chain.h"
#include "icp/metrics.h"

namespace icp {

struct UserOracleSpec {
  enum class Kind { Lm, Scripted };
  Kind kind = Kind::Lm;
  BackendSpec backend;      // Lm
  std::string template_id;  // Lm; empty picks user-<family> per sample
  std::map<std::string, std::string> answers;  // Scripted
  std::optional<std::string> fallback;
};

// Explicit template ids for one target language. Empty fields fall back to
// the per-ambiguity defaults.
struct LangTemplates {
  std::string ask, translate, with_context, no_extras;
};

struct ScorerSpec {
  std::string kind = "exact";  // exact | bleu | http
  std::string endpoint;
  double timeout_s = 30;
};

/// One declarative experiment. Relative paths resolve against the config
/// file's directory.
struct ExperimentConfig {
  std::filesystem::path dataset;
  std::vector<ChainMode> modes;
  std::vector<BackendSpec> translators;
  std::optional<UserOracleSpec> user;  // required with Icp
  std::map<std::string, LangTemplates> templates;
  std::filesystem::path template_dir;  // optional overrides of the builtins
  std::set<std::string> metrics{"bleu", "hit", "score", "f_acc", "g_acc", "bias"};
  BleuOptions bleu;
  ScorerSpec scorer;
  std::optional<BackendSpec> gender_lm;  // rule classifier when absent
  std::uint64_t seed = 1;
  int resamples = 1000;
  double alpha = 0.05;
  std::size_t parallelism = 4;
  std::filesystem::path output_dir;

  // ConfigError on unknown modes, metrics or scorer kinds.
  static ExperimentConfig from_json(const nlohmann::json& j,
                                    const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
  // Backend auth values never appear here: specs only name the variable.
  nlohmann::json to_json() const;
};

/// Metrics of one chain. Optional fields are absent when the metric does
/// not apply to the sample's ambiguity or was not requested.
struct SampleScores {
  std::string sample_id;
  std::string system;  // translator backend id
  ChainMode mode = ChainMode::Icp;
  LangPair lang_pair = LangPair::EnEs;
  AmbiguityType ambiguity = AmbiguityType::Formality;
  ChainStatus status = ChainStatus::Completed;
  std::optional<ChainStage> failed_stage;
  std::string question, answer, translation;
  std::optional<double> bleu;  // sentence BLEU
  std::optional<double> hit3, hit10, b3, b10;
  std::optional<std::string> f_label, g_label;
  std::optional<double> f_correct, g_correct;  // 0 or 1
};

struct AggregateRow {
  std::string system;
  ChainMode mode = ChainMode::Icp;
  LangPair lang_pair = LangPair::EnEs;
  AmbiguityType ambiguity = AmbiguityType::Formality;
  std::size_t n = 0;
  std::size_t failed = 0;
  std::optional<double> bleu;           // corpus BLEU over the group
  std::optional<double> sentence_bleu;  // mean of per-sample values
  std::optional<double> hit3, hit10, b3, b10, f_acc, g_acc;
  std::optional<BiasReport> bias;
};

struct SignificanceResult {
  std::string system_a, system_b;
  std::string metric;
  std::string group;  // "<lang_pair>/<ambiguity>", empty for a bare call
  double p_value = 1;
  int resamples = 0;
  double alpha = 0.05;
  bool verdict = false;  // p_value < alpha
};

struct MetricReport {
  nlohmann::json config;
  std::vector<SampleScores> per_sample;
  std::vector<AggregateRow> aggregate;
  std::vector<SignificanceResult> significance;
  std::map<std::string, std::size_t> failures;  // by failed stage, plus "scorer"
  std::size_t new_chains = 0;  // chains run by this call; not serialized
};

nlohmann::json to_json(const MetricReport& r);
MetricReport report_from_json(const nlohmann::json& j);  // ConfigError
// One row per aggregate; n/a cells are empty.
std::string aggregate_csv(const MetricReport& r);

struct RunOptions {
  // Stop dispatching after this many new chains (simulates an interruption).
  std::optional<std::size_t> max_new_chains;
};

// Runs every (translator, sample, mode) chain not already Completed in
// output_dir/transcript-<backend_id>.jsonl, appending new chains as they
// finish, then scores everything in the log and writes report.json and
// report.csv. Failed chains are retried on rerun. EmptyInput on an empty
// dataset; unresolvable templates raise before any chain runs.
MetricReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

// Scoring and aggregation only; `chains` maps translator id to its chains.
MetricReport build_report(const ExperimentConfig& cfg, const std::vector<AmbiguitySample>& dataset,
                          const std::map<std::string, std::vector<InteractionChain>>& chains);

/// Paired bootstrap: resample indices with replacement, count resamples
/// where mean(a) <= mean(b) and where mean(a) >= mean(b); the p-value is
/// twice the smaller share, capped at 1. LengthMismatch unless both lists
/// have the same length >= 2.
SignificanceResult paired_bootstrap(const std::vector<double>& a, const std::vector<double>& b,
                                    int resamples = 1000, double alpha = 0.05,
                                    std::uint64_t seed = 1);

// Same test on corpus BLEU, recomputed from resampled sufficient statistics.
SignificanceResult paired_bootstrap_bleu(const std::vector<BleuStats>& a,
                                         const std::vector<BleuStats>& b, const BleuOptions& opts,
                                         int resamples = 1000, double alpha = 0.05,
                                         std::uint64_t seed = 1);

enum class ErrorType { WrongQuestion, WrongAnswer, ManyAmbiguities, LimitedContext, StyleOrOther };

std::string to_string(ErrorType t);
ErrorType parse_error_type(std::string_view s);  // UnknownErrorType
const std::vector<ErrorType>& error_types();

struct Annotation {
  ErrorType type = ErrorType::StyleOrOther;
  std::string annotator;
  std::string at;  // ISO-8601 UTC
};

struct BundleEntry {
  std::string chain_id;  // "<system>:<mode>:<sample_id>"
  std::string sample_id, system;
  ChainMode mode = ChainMode::Icp;
  std::string status;
  std::string query, question, context, answer, translation;
  std::optional<ErrorType> error_type;
  std::vector<Annotation> history;
};

struct ErrorBundle {
  std::vector<BundleEntry> entries;
};

/// What a bundle predicate sees: one scored chain, its sample, and the same
/// sample's rows under the other modes of the same system.
struct BundleCandidate {
  const SampleScores& row;
  const AmbiguitySample& sample;
  std::map<ChainMode, const SampleScores*> peers;
};
using BundlePredicate = std::function<bool(const BundleCandidate&)>;

BundlePredicate failed_chains();
// Icp rows whose metric is <= the baseline row's (bleu, hit3, b3, f_acc or g_acc).
BundlePredicate icp_not_better(std::string metric, ChainMode baseline = ChainMode::WithContext);
// "all", "failed", or "icp_not_better:<metric>[:<baseline mode>]".
BundlePredicate parse_bundle_predicate(std::string_view spec);

// Matching rows in report order; when more than `sample_size` match, a
// seeded uniform subset is kept (still in report order).
ErrorBundle export_error_bundle(const MetricReport& report,
                                const std::vector<AmbiguitySample>& dataset,
                                const BundlePredicate& predicate,
                                std::optional<std::size_t> sample_size = 50,
                                std::uint64_t seed = 0);

// Sets the label and appends to the history. UnknownChain, UnknownErrorType.
void annotate_error(ErrorBundle& bundle, std::string_view chain_id, std::string_view error_type,
                    std::string annotator, std::string at = {});

// Count per error type plus "unannotated".
std::map<std::string, std::size_t> error_distribution(const ErrorBundle& bundle);

std::string bundle_to_jsonl(const ErrorBundle& bundle);
ErrorBundle bundle_from_jsonl(std::string_view content);  // FormatError
void write_bundle(const std::filesystem::path& path, const ErrorBundle& bundle);
ErrorBundle read_bundle(const std::filesystem::path& path);

std::string utc_timestamp();

}  // namespace icp
