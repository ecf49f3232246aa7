#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "icp/ambiguity.h"
#include "icp/backend.h"
#include "icp/chain.h"
#include "icp/prompt.h"

namespace icp {

enum class BleuSmoothing { None, AddOne };
enum class BleuTokenizer { Latin13a, CharLevel };
enum class BleuCase { Lower, Preserve };

struct BleuOptions {
  int max_order = 4;
  BleuSmoothing smoothing = BleuSmoothing::AddOne;
  BleuTokenizer tokenizer = BleuTokenizer::Latin13a;
  BleuCase case_mode = BleuCase::Preserve;

  void validate() const;  // ConfigError
  nlohmann::json to_json() const;
  static BleuOptions from_json(const nlohmann::json& j);
};

std::string to_string(BleuTokenizer t);  // "13a", "char"
std::string to_string(BleuSmoothing s);  // "none", "add_one"

// mteval-v13a style: ASCII punctuation split off, periods and commas kept
// inside numbers. CharLevel yields one token per non-space code point.
std::vector<std::string> bleu_tokenize(std::string_view text, const BleuOptions& opts);

/// Clipped n-gram counts; sums across sentences give corpus statistics.
struct BleuStats {
  std::vector<long> matches;  // per order, index 0 = unigrams
  std::vector<long> totals;
  long hyp_len = 0;
  long ref_len = 0;

  BleuStats& operator+=(const BleuStats& o);
};

BleuStats bleu_stats(std::string_view hyp, std::string_view ref, const BleuOptions& opts);

// Geometric mean of the order precisions times the brevity penalty, in
// [0, 100]. AddOne replaces a zero match count by 1/(total + 1). An empty
// hypothesis side scores 0.
double bleu_from_stats(const BleuStats& stats, const BleuOptions& opts);

// LengthMismatch, EmptyInput.
double corpus_bleu(const std::vector<std::string>& hyps, const std::vector<std::string>& refs,
                   const BleuOptions& opts = {});
double sentence_bleu(std::string_view hyp, std::string_view ref, const BleuOptions& opts = {});
// Mean of sentence BLEU scores over aligned pairs.
double mean_sentence_bleu(const std::vector<std::string>& hyps,
                          const std::vector<std::string>& refs, const BleuOptions& opts = {});

struct Phrase {
  std::string text;  // as generated, trimmed
  std::string key;   // NFC + case-folded, for matching
};

// Comma-separated phrases, trimmed, empties dropped.
std::vector<Phrase> split_phrases(std::string_view completion);

// True when the folded gold equals one of the first n phrases. n >= 1 (ConfigError).
bool hit_at_n(std::string_view completion, std::string_view gold, std::size_t n);

/// Similarity of a candidate to a reference on a 0..100 scale.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::string id() const = 0;
  virtual double score(std::string_view candidate, std::string_view reference) = 0;
};

// 100 when the folded strings are equal, else 0.
class ExactMatchScorer : public Scorer {
 public:
  std::string id() const override { return "exact"; }
  double score(std::string_view candidate, std::string_view reference) override;
};

// Sentence BLEU as a cheap learned-metric stand-in.
class BleuScorer : public Scorer {
 public:
  explicit BleuScorer(BleuOptions opts = {}) : opts_(opts) {}
  std::string id() const override { return "sentence_bleu"; }
  double score(std::string_view candidate, std::string_view reference) override;

 private:
  BleuOptions opts_;
};

/// External scorer service: POST {"candidate", "reference"} -> {"score"}.
/// Scores outside [0, 1] are taken as already on the 0..100 scale; those in
/// [0, 1] are multiplied by 100.
class HttpScorer : public Scorer {
 public:
  HttpScorer(std::string scorer_id, std::string endpoint, double timeout_s = 30);
  std::string id() const override { return id_; }
  double score(std::string_view candidate, std::string_view reference) override;

 private:
  std::string id_;
  std::string base_;
  std::string path_;
  double timeout_s_;
};

// Max over the first n phrases of scorer(phrase, gold); 0 with no phrases.
// Any scorer error or non-finite score raises ScorerFailure(phrase index).
double best_score_at_n(std::string_view completion, std::string_view gold, std::size_t n,
                       Scorer& scorer);

// Fraction of the dataset's formality samples for `lang` whose chain
// translation classifies (Relaxed) as the gold label. Every such sample
// needs exactly one chain and every chain a sample (AlignmentError);
// Undetermined counts as wrong.
double formality_accuracy(const std::vector<InteractionChain>& chains,
                          const std::vector<AmbiguitySample>& dataset, std::string_view lang);

using GenderClassifier =
    std::function<Gender(const AmbiguitySample& sample, const std::string& translation)>;

// Rule classifier for the sample's target language.
GenderClassifier rule_gender_classifier();

// Same alignment contract as formality_accuracy, over samples with a gender label.
double gender_accuracy(const std::vector<InteractionChain>& chains,
                       const std::vector<AmbiguitySample>& dataset, std::string_view lang,
                       const GenderClassifier& classify);

// Parses "feminine" / "masculine" from the first line; anything else is Undetermined.
Gender parse_gender_answer(std::string_view completion);

// Needs a GenderClassify template (StageMismatch). Backend errors propagate.
Gender gender_classify_lm(Backend& backend, const PromptTemplate& tpl, std::string_view en_text,
                          std::string_view target_text);

struct BiasReport {
  std::map<std::string, std::size_t> counts;  // includes "undetermined"
  std::map<std::string, double> proportions;  // over determined labels only
  double undetermined_share = 0;
  std::size_t total = 0;
};

BiasReport bias_report(const std::vector<Gender>& labels);  // EmptyInput
BiasReport bias_report(const std::vector<FormalityLabel>& labels);
nlohmann::json to_json(const BiasReport& r);

}  // namespace icp
