#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "icp/annotation.h"

namespace icp {

/// Gendered-pronoun lexicon for one target language. Shipped for es, fr, de
/// and ja; further languages load from the same JSON shape.
struct GenderLexicon {
  struct Clitics {
    std::set<std::string> feminine, masculine;
    // A bare clitic counts only right after one of these tokens, which keeps
    // articles ("la casa", "le chat") out.
    std::set<std::string> triggers_before;
  };
  struct Enclitics {
    std::vector<std::string> feminine, masculine;
    std::vector<std::string> infixes;  // "se" in "bébersela"
    std::vector<std::string> host_suffixes;
    std::size_t min_host_length = 3;
    std::vector<std::string> imperative_host_endings;
    std::size_t imperative_min_host_length = 5;
    std::set<std::string> exclusions;
  };
  // French past-participle agreement after an elided object clitic:
  // "l'avaient mise" is feminine.
  struct ParticipleAgreement {
    std::set<std::string> elided;
    std::set<std::string> auxiliaries;
    std::set<std::string> skippable;  // adverbs allowed between auxiliary and participle
    std::vector<std::string> feminine_suffixes, masculine_suffixes;
  };

  std::string lang;
  bool substring_match = false;
  bool case_sensitive = false;
  bool fold_diacritics = false;
  std::size_t min_verb_length = 4;
  std::set<std::string> pronouns_feminine, pronouns_masculine;
  Clitics clitics;
  Clitics hyphen_clitics;  // triggers unused; adjacency to '-' is the trigger
  Enclitics enclitics;
  ParticipleAgreement participles;
  std::set<std::string> function_words;

  static GenderLexicon from_json(std::string_view json_text);
  std::string normalize(std::string_view token) const;
};

class GenderLexiconRegistry {
 public:
  static GenderLexiconRegistry with_builtins();  // es, fr, de, ja

  void add(GenderLexicon lexicon);
  void load_file(const std::string& path);
  bool has(std::string_view lang) const;
  const GenderLexicon& get(std::string_view lang) const;  // UnsupportedLanguage

 private:
  std::map<std::string, GenderLexicon, std::less<>> lexicons_;
};

GenderLexiconRegistry& default_gender_lexicons();

/// What the rules found in one sentence. `label()` is Undetermined when
/// there is no evidence or when both genders occur.
struct GenderEvidence {
  std::vector<std::string> feminine;
  std::vector<std::string> masculine;
  bool has_verb = false;

  Gender label() const;
};

// Without an annotation a verb is assumed when some token of at least
// min_verb_length code points is not a function word, or when an enclitic
// host or agreeing participle was matched. Substring lexicons (ja) treat any
// non-empty sentence as having a verb.
GenderEvidence gender_evidence(std::string_view sentence, const GenderLexicon& lexicon,
                               const SyntacticAnnotation* annotation = nullptr);

Gender classify_gender(std::string_view sentence, const GenderLexicon& lexicon);

// Rule classifier used for G-Acc. Only es and fr are supported.
Gender gender_classify_rule(std::string_view sentence, std::string_view lang);

// he/him/his/himself vs she/her/hers/herself, case-insensitive.
GenderEvidence english_pronoun_evidence(std::string_view text);

bool is_gendered_english_pronoun(std::string_view token);

// Replaces every gendered English pronoun token with "[pr]". Other bytes are
// copied unchanged.
std::string mask_gendered_pronouns(std::string_view text);

// Number of tokens mask_gendered_pronouns would replace.
std::size_t count_gendered_pronouns(std::string_view text);

}  // namespace icp
