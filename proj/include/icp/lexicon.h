#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace icp {

struct Sense {
  std::string gloss;
  std::set<std::string> synonyms;  // lowercase lemmas
};

/// word -> definitions. JSON: {"bank": [{"gloss": "...", "synonyms": ["depository", ...]}]}
class SenseInventory {
 public:
  static SenseInventory from_json(std::string_view json_text);
  static SenseInventory load(const std::filesystem::path& path);

  void add(const std::string& word, std::vector<Sense> senses);
  bool contains(std::string_view word) const;
  const std::vector<Sense>& senses(std::string_view word) const;  // UnknownWord
  std::vector<std::string> words() const;

 private:
  std::map<std::string, std::vector<Sense>, std::less<>> entries_;
};

// Definitions whose synonym sets intersect are merged, transitively; the
// result is the number of merged groups.
std::size_t count_senses(std::string_view word, const SenseInventory& inventory);

struct TranslationCandidate {
  std::string form;
  std::string gloss;  // sense of the English word this form renders; may be empty
};

/// (English word, target language) -> target forms.
/// JSON: {"about": {"es": ["aproximadamente", {"form": "sobre", "gloss": "regarding"}]}}
class TranslationCandidates {
 public:
  static TranslationCandidates from_json(std::string_view json_text);
  static TranslationCandidates load(const std::filesystem::path& path);

  void add(const std::string& word, const std::string& lang,
           std::vector<TranslationCandidate> forms);
  // nullptr when the word has no entry for `lang`.
  const std::vector<TranslationCandidate>* find(std::string_view word,
                                                std::string_view lang) const;

 private:
  std::map<std::pair<std::string, std::string>, std::vector<TranslationCandidate>> entries_;
};

struct NameStats {
  double p_female = 0;
  double p_male = 0;

  // Unisex when the minority share is strictly above `threshold`.
  bool unisex(double threshold = 0.40) const;
};

/// Personal names with gender proportions, read from CSV "name,p_female,p_male".
/// Lookup is case-insensitive.
class NameTable {
 public:
  static NameTable from_csv(std::string_view csv);
  static NameTable load(const std::filesystem::path& path);

  void add(const std::string& name, NameStats stats);  // ConfigError on bad proportions
  std::optional<NameStats> find(std::string_view name) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, NameStats, std::less<>> entries_;
};

std::string read_text_file(const std::filesystem::path& path);  // IoError

}  // namespace icp
