#include "icp/lexicon.h"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "icp/error.h"
#include "icp/text.h"

namespace icp {

using nlohmann::json;

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SenseInventory SenseInventory::from_json(std::string_view json_text) {
  SenseInventory inv;
  try {
    json j = json::parse(json_text);
    for (const auto& [word, defs] : j.items()) {
      std::vector<Sense> senses;
      for (const auto& d : defs) {
        Sense s;
        s.gloss = d.at("gloss").get<std::string>();
        for (const auto& syn : d.value("synonyms", json::array()))
          s.synonyms.insert(to_lower(syn.get<std::string>()));
        senses.push_back(std::move(s));
      }
      inv.add(to_lower(word), std::move(senses));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("sense inventory: ") + e.what());
  }
  return inv;
}

SenseInventory SenseInventory::load(const std::filesystem::path& path) {
  return from_json(read_text_file(path));
}

void SenseInventory::add(const std::string& word, std::vector<Sense> senses) {
  std::set<std::string> glosses;
  for (const auto& s : senses)
    if (!glosses.insert(s.gloss).second)
      throw ConfigError("duplicate gloss '" + s.gloss + "' for '" + word + "'");
  entries_[word] = std::move(senses);
}

bool SenseInventory::contains(std::string_view word) const {
  return entries_.find(word) != entries_.end();
}

const std::vector<Sense>& SenseInventory::senses(std::string_view word) const {
  auto it = entries_.find(word);
  if (it == entries_.end()) throw UnknownWord("'" + std::string(word) + "' not in sense inventory");
  return it->second;
}

std::vector<std::string> SenseInventory::words() const {
  std::vector<std::string> out;
  for (const auto& [w, s] : entries_) out.push_back(w);
  return out;
}

std::size_t count_senses(std::string_view word, const SenseInventory& inventory) {
  const auto& defs = inventory.senses(word);
  std::vector<std::size_t> parent(defs.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  // lemma -> first definition that mentioned it
  std::map<std::string, std::size_t> owner;
  for (std::size_t i = 0; i < defs.size(); ++i)
    for (const auto& syn : defs[i].synonyms) {
      auto [it, fresh] = owner.emplace(syn, i);
      if (!fresh) parent[find(i)] = find(it->second);
    }
  std::size_t groups = 0;
  for (std::size_t i = 0; i < defs.size(); ++i)
    if (find(i) == i) ++groups;
  return groups;
}

TranslationCandidates TranslationCandidates::from_json(std::string_view json_text) {
  TranslationCandidates tc;
  try {
    json j = json::parse(json_text);
    for (const auto& [word, by_lang] : j.items())
      for (const auto& [lang, forms] : by_lang.items()) {
        std::vector<TranslationCandidate> out;
        for (const auto& f : forms) {
          if (f.is_string())
            out.push_back({nfc(f.get<std::string>()), ""});
          else
            out.push_back({nfc(f.at("form").get<std::string>()), f.value("gloss", "")});
        }
        tc.add(to_lower(word), lang, std::move(out));
      }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("translation candidates: ") + e.what());
  }
  return tc;
}

TranslationCandidates TranslationCandidates::load(const std::filesystem::path& path) {
  return from_json(read_text_file(path));
}

void TranslationCandidates::add(const std::string& word, const std::string& lang,
                                std::vector<TranslationCandidate> forms) {
  if (forms.empty()) throw ConfigError("no candidates for '" + word + "' (" + lang + ")");
  std::set<std::string> seen;
  for (const auto& f : forms)
    if (!seen.insert(fold_case(f.form)).second)
      throw ConfigError("duplicate candidate '" + f.form + "' for '" + word + "'");
  entries_[{word, lang}] = std::move(forms);
}

const std::vector<TranslationCandidate>* TranslationCandidates::find(std::string_view word,
                                                                    std::string_view lang) const {
  auto it = entries_.find({std::string(word), std::string(lang)});
  return it == entries_.end() ? nullptr : &it->second;
}

bool NameStats::unisex(double threshold) const {
  return std::min(p_female, p_male) > threshold;
}

NameTable NameTable::from_csv(std::string_view csv) {
  NameTable table;
  std::size_t line_no = 0;
  std::istringstream in{std::string(csv)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto cols = split(line, ',');
    if (cols.size() != 3) throw FormatError(line_no, "expected name,p_female,p_male");
    if (line_no == 1 && trim(cols[0]) == "name") continue;
    NameStats s;
    auto number = [&](const std::string& field) {
      std::string t = trim(field);
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(t, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (t.empty() || used != t.size()) throw FormatError(line_no, "proportions must be numbers");
      return v;
    };
    s.p_female = number(cols[1]);
    s.p_male = number(cols[2]);
    try {
      table.add(trim(cols[0]), s);
    } catch (const ConfigError& e) {
      throw FormatError(line_no, e.what());
    }
  }
  return table;
}

NameTable NameTable::load(const std::filesystem::path& path) {
  return from_csv(read_text_file(path));
}

void NameTable::add(const std::string& name, NameStats s) {
  if (s.p_female < 0 || s.p_female > 1 || s.p_male < 0 || s.p_male > 1)
    throw ConfigError("proportions for '" + name + "' must lie in [0,1]");
  double sum = s.p_female + s.p_male;
  if (sum < 0.99 || sum > 1.01)
    throw ConfigError("proportions for '" + name + "' sum to " + std::to_string(sum));
  entries_[fold_case(name)] = s;
}

std::optional<NameStats> NameTable::find(std::string_view name) const {
  auto it = entries_.find(fold_case(name));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

}  // namespace icp
