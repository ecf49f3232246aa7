#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "icp/annotation.h"

namespace icp {

enum class FormalityLabel { Formal, Informal, Undetermined };
enum class FormalityPolicy { Strict, Relaxed };

std::string to_string(FormalityLabel l);  // "formal", "informal", "undetermined"
std::optional<FormalityLabel> parse_formality(std::string_view s);
FormalityPolicy parse_formality_policy(std::string_view s);

enum class Marker {
  VerbFormal,
  VerbInformal,
  PronounFormal,
  PronounInformal,
  DeterminantFormal,
  DeterminantInformal,
};
inline constexpr std::size_t kMarkerCount = 6;

std::string to_string(Marker m);  // "is_verb_formal", ...

/// T-V markers found in one target-language sentence. Every set flag carries
/// the surface tokens that triggered it.
struct MarkerSet {
  std::array<bool, kMarkerCount> flags{};
  std::array<std::vector<std::string>, kMarkerCount> evidence;

  bool is(Marker m) const { return flags[static_cast<std::size_t>(m)]; }
  const std::vector<std::string>& tokens(Marker m) const {
    return evidence[static_cast<std::size_t>(m)];
  }
  bool any_formal() const;
  bool any_informal() const;
};

enum class ExclamationCondition { Any, Present, Absent };

struct FormList {
  std::vector<std::string> forms;
  ExclamationCondition exclamation = ExclamationCondition::Any;
};

struct SuffixRule {
  std::vector<std::string> suffixes;
  bool require_all = false;  // "all verbs" vs "any verb"
};

/// Per-language marker lists and the conjunctions that turn flags into a
/// strict label. Loaded from JSON; es/fr/de ship built in.
struct FormalityRules {
  std::string lang;
  bool substring_match = false;
  bool case_sensitive = false;
  bool fold_diacritics = false;
  std::size_t min_verb_length = 4;
  std::optional<SuffixRule> verb_formal;
  std::optional<SuffixRule> verb_informal;
  std::vector<FormList> pronoun_formal;
  std::vector<FormList> pronoun_informal;
  std::vector<FormList> determinant_formal;
  std::vector<FormList> determinant_informal;
  // Which of {"verb", "pronoun", "determinant"} must all hold.
  std::vector<std::string> formal_requires;
  std::vector<std::string> informal_requires;
  std::set<std::string> function_words;  // normalized

  static FormalityRules from_json(std::string_view json_text);

  std::string normalize(std::string_view token) const;
};

class FormalityRuleRegistry {
 public:
  // Registry preloaded with the built-in es, fr and de rules.
  static FormalityRuleRegistry with_builtins();

  void add(FormalityRules rules);
  void load_file(const std::string& path);
  bool has(std::string_view lang) const;
  const FormalityRules& get(std::string_view lang) const;  // UnsupportedLanguage

 private:
  std::map<std::string, FormalityRules, std::less<>> rules_;
};

// Process-wide registry holding the built-ins plus anything registered at
// startup (e.g. a ja plug-in). Not synchronized; register before use.
FormalityRuleRegistry& default_formality_rules();

// When `annotation` is supplied, suffix rules apply to VERB/AUX tokens,
// pronoun lists to PRON and determinant lists to DET. Without it every
// list applies to every token and verb candidates are tokens of at least
// min_verb_length code points that are neither function words nor
// pronoun/determinant matches.
MarkerSet detect_formality_markers(std::string_view sentence, const FormalityRules& rules,
                                   const SyntacticAnnotation* annotation = nullptr);
MarkerSet detect_formality_markers(std::string_view sentence, std::string_view lang);

FormalityLabel classify_markers(const MarkerSet& markers, const FormalityRules& rules,
                                FormalityPolicy policy);

FormalityLabel classify_formality(std::string_view sentence, const FormalityRules& rules,
                                  FormalityPolicy policy,
                                  const SyntacticAnnotation* annotation = nullptr);
FormalityLabel classify_formality(std::string_view sentence, std::string_view lang,
                                  FormalityPolicy policy);

}  // namespace icp
