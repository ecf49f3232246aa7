#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "icp/annotation.h"
#include "icp/corpus.h"
#include "icp/formality.h"
#include "icp/gender.h"
#include "icp/lexicon.h"

namespace icp {

enum class AmbiguityType { ItResolution, Polysemy, Formality, NeutralName, NeutralProfession };

std::string to_string(AmbiguityType t);  // "it_resolution", "polysemy", ...
AmbiguityType parse_ambiguity_type(std::string_view s);  // ConfigError

struct SenseId {
  std::string word;
  std::string gloss;
  bool operator==(const SenseId&) const = default;
};

using ClassLabel = std::variant<FormalityLabel, Gender, SenseId>;

// "formal", "feminine", or "word:gloss" for senses.
std::string label_string(const ClassLabel& label);

struct AmbiguitySample {
  std::string id;
  AmbiguityType ambiguity = AmbiguityType::Formality;
  LangPair lang_pair = LangPair::EnEs;
  std::string source;
  std::string context;
  std::string target;
  ClassLabel label = FormalityLabel::Undetermined;
};

// Throws ConfigError when the label does not fit the ambiguity type or the
// source is empty.
void validate_sample(const AmbiguitySample& s);

nlohmann::json to_json(const AmbiguitySample& s);
AmbiguitySample sample_from_json(const nlohmann::json& j);

std::string dataset_to_jsonl(const std::vector<AmbiguitySample>& samples);
std::vector<AmbiguitySample> dataset_from_jsonl(std::string_view content);  // FormatError
void write_dataset(const std::filesystem::path& path, const std::vector<AmbiguitySample>& samples);
std::vector<AmbiguitySample> read_dataset(const std::filesystem::path& path);

// Token-bounded, case-insensitive.
bool contains_token(std::string_view text, std::string_view token);

/// Detector results carry no id or context; build_dataset fills both.
struct Detection {
  std::string source;
  std::string target;
  ClassLabel label;
};

// English side must contain "you"/"your" and fewer than `max_words` words;
// the target must classify as Formal or Informal under `policy`.
std::optional<Detection> detect_formality_sample(const SentencePair& pair,
                                                 const FormalityRules& rules,
                                                 FormalityPolicy policy = FormalityPolicy::Strict,
                                                 std::size_t max_words = 20);

// Skips pairs whose every "it" is expletive per `src_ann`, and pairs whose
// target lacks a verb or gendered-pronoun evidence. An Undetermined target
// gender also skips.
std::optional<Detection> detect_it_sample(const SentencePair& pair,
                                          const SyntacticAnnotation& src_ann,
                                          const GenderLexicon& tgt_lexicon,
                                          const SyntacticAnnotation* tgt_ann = nullptr);

// Needs a unisex name in the English sentence. Gender comes from English
// pronouns when there are any, else from target-side evidence; mixed
// evidence skips. The emitted source is [pr]-masked.
std::optional<Detection> detect_neutral_name_sample(const SentencePair& pair,
                                                    const NameTable& names,
                                                    const GenderLexicon& tgt_lexicon,
                                                    const SyntacticAnnotation* tgt_ann = nullptr,
                                                    double unisex_threshold = 0.40);

struct PolysemyOptions {
  std::size_t min_senses = 4;
  std::size_t min_len = 5;
};

// Words of the inventory that pass both thresholds.
std::vector<std::string> polysemous_words(const SenseInventory& inventory,
                                          const PolysemyOptions& opts = {});

// One sample per (pair, qualifying word) where the English sentence contains
// the word and the target contains exactly one of its candidates. The label
// gloss is the candidate's gloss, or the candidate form when it has none.
// Ids are "<lang_pair>-polysemy-<doc_id>-<index>-<word>".
std::vector<AmbiguitySample> build_polysemy_samples(const std::vector<ParallelDocument>& corpus,
                                                    const SenseInventory& inventory,
                                                    const TranslationCandidates& candidates,
                                                    const PolysemyOptions& opts = {});

/// One row of a Translated-Wikipedia-Biographies style CSV.
struct BiographyRecord {
  std::string document_id;
  LangPair lang_pair = LangPair::EnEs;
  std::string source;
  std::string target;
  Gender perceived_gender = Gender::Undetermined;
};

// Header must include sourceText, translatedText, perceivedGender, documentID
// and targetLanguage (or a lang_pair column). Quoted fields follow RFC 4180.
std::vector<BiographyRecord> parse_biographies_csv(std::string_view csv);
std::vector<BiographyRecord> load_biographies(const std::filesystem::path& path);

struct DatasetConfig {
  std::vector<AmbiguityType> types;
  std::vector<LangPair> langs;
  FormalityPolicy policy = FormalityPolicy::Strict;
  std::size_t max_words = 20;
  ContextOptions context;
  std::size_t per_class_cap = 0;  // 0 = unlimited
  PolysemyOptions polysemy;
  double unisex_threshold = 0.40;
  // Optional resource paths (JSON keys under "resources").
  std::string senses_path, candidates_path, names_path, biographies_path, annotations_path;

  static DatasetConfig from_json(const nlohmann::json& j);  // ConfigError
};

/// Resources the detectors need. Types whose resource is missing raise
/// ConfigError in build_dataset.
struct DatasetInputs {
  const SenseInventory* senses = nullptr;
  const TranslationCandidates* candidates = nullptr;
  const NameTable* names = nullptr;
  const std::vector<BiographyRecord>* biographies = nullptr;
  const AnnotationProvider* annotations = nullptr;  // English side; PatternAnnotator if null
};

struct Dataset {
  std::vector<AmbiguitySample> samples;
  // Polysemous word -> merged sense count, for the senses/word statistic.
  std::map<std::string, std::size_t> sense_counts;
};

// Deterministic: types in config order, documents in corpus order. Samples
// are deduplicated on the underlying (English sentence, target sentence)
// within each (lang_pair, ambiguity) after NFC; per-class caps keep the
// earliest samples.
Dataset build_dataset(const std::vector<ParallelDocument>& corpus, const DatasetConfig& config,
                      const DatasetInputs& inputs);

struct StatsRow {
  LangPair lang_pair = LangPair::EnEs;
  AmbiguityType ambiguity = AmbiguityType::Formality;
  std::size_t count = 0;
  std::map<std::string, std::size_t> class_counts;
  std::map<std::string, double> class_proportions;
  double senses_per_word = 0;  // polysemy only
};

struct StatsReport {
  std::vector<StatsRow> rows;  // sorted by (lang_pair, ambiguity)
  std::map<LangPair, std::size_t> totals;
  std::size_t total = 0;
};

StatsReport dataset_stats(const Dataset& dataset, const SenseInventory* inventory = nullptr);
nlohmann::json to_json(const StatsReport& report);

}  // namespace icp
