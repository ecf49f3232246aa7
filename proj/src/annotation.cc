#include "icp/annotation.h"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "icp/error.h"
#include "icp/text.h"

namespace icp {

std::string to_string(Gender g) {
  switch (g) {
    case Gender::Feminine: return "feminine";
    case Gender::Masculine: return "masculine";
    case Gender::Undetermined: return "undetermined";
  }
  return "undetermined";
}

std::optional<Gender> parse_gender(std::string_view s) {
  std::string f = fold_case(trim(s));
  if (f == "feminine" || f == "female" || f == "f") return Gender::Feminine;
  if (f == "masculine" || f == "male" || f == "m") return Gender::Masculine;
  if (f == "undetermined" || f == "neutral") return Gender::Undetermined;
  return std::nullopt;
}

void check_annotation(std::string_view sentence, const SyntacticAnnotation& ann) {
  auto toks = word_tokens(sentence);
  if (toks.size() != ann.tokens.size())
    throw MissingAnnotation("annotation from '" + ann.provider + "' has " +
                            std::to_string(ann.tokens.size()) + " tokens, sentence has " +
                            std::to_string(toks.size()));
  for (std::size_t i = 0; i < toks.size(); ++i)
    if (toks[i].text != ann.tokens[i].text)
      throw MissingAnnotation("annotation token " + std::to_string(i) + " '" +
                              ann.tokens[i].text + "' does not match '" + toks[i].text + "'");
}

namespace {

const std::set<std::string>& weather_words() {
  static const std::set<std::string> w = {
      "rain",    "rains",   "raining", "rained",  "snow",     "snows",   "snowing",
      "snowed",  "pour",    "pours",   "pouring", "drizzling", "hailing", "sleeting",
      "sunny",   "cloudy",  "windy",   "foggy",   "freezing", "cold",    "hot",
      "warm",    "chilly",  "humid",   "late",    "early",    "noon",    "midnight",
      "time",    "dark"};
  return w;
}

const std::set<std::string>& auxiliary_fillers() {
  static const std::set<std::string> w = {
      "is",     "was",  "s",       "will",    "be",    "ll",      "has",    "had",
      "been",   "d",    "would",   "could",   "might", "may",     "must",   "keeps",
      "kept",   "started", "starts", "start", "stopped", "getting", "gets", "got",
      "going",  "to",   "gonna",   "still",   "already", "really", "so",   "very",
      "too",    "not",  "also",    "quite",   "just",  "always",  "never"};
  return w;
}

const std::set<std::string>& raising_verbs() {
  static const std::set<std::string> w = {"seems", "seemed", "appears", "appeared",
                                          "looks", "looked", "sounds", "sounded"};
  return w;
}

const std::set<std::string>& copulas() {
  static const std::set<std::string> w = {"is", "was", "s"};
  return w;
}

const std::set<std::string>& degree_adverbs() {
  static const std::set<std::string> w = {"very", "so", "too", "really", "quite",
                                          "not", "also", "pretty", "extremely"};
  return w;
}

bool expletive_at(const std::vector<std::string>& lw, std::size_t i) {
  const std::size_t n = lw.size();
  // weather and time predicates
  for (std::size_t j = i + 1; j < n && j <= i + 4; ++j) {
    if (weather_words().count(lw[j])) return true;
    if (!auxiliary_fillers().count(lw[j])) break;
  }
  // raising verbs
  if (i + 2 < n && raising_verbs().count(lw[i + 1])) {
    static const std::set<std::string> comp = {"that", "like", "as", "to", "if"};
    if (comp.count(lw[i + 2])) return true;
  }
  // extraposition: it + copula + (adverb)* + X + {to, that}
  if (i + 1 < n && copulas().count(lw[i + 1])) {
    std::size_t j = i + 2;
    while (j < n && degree_adverbs().count(lw[j])) ++j;
    static const std::set<std::string> excluded = {"going", "supposed", "used", "about",
                                                   "gonna", "meant", "due", "set"};
    if (j + 1 < n && !excluded.count(lw[j]) && (lw[j + 1] == "to" || lw[j + 1] == "that"))
      return true;
  }
  return false;
}

}  // namespace

std::optional<SyntacticAnnotation> PatternAnnotator::annotate(std::string_view sentence,
                                                              std::string_view) const {
  SyntacticAnnotation ann;
  ann.provider = id();
  auto toks = word_tokens(sentence);
  std::vector<std::string> lw;
  lw.reserve(toks.size());
  for (const auto& t : toks) lw.push_back(to_lower(t.text));
  for (std::size_t i = 0; i < toks.size(); ++i) {
    AnnotatedToken at;
    at.text = toks[i].text;
    at.lemma = lw[i];
    at.expletive = lw[i] == "it" && expletive_at(lw, i);
    ann.tokens.push_back(std::move(at));
  }
  return ann;
}

FileAnnotationProvider::FileAnnotationProvider(const std::string& path) : id_("file") {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read annotations " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      SyntacticAnnotation ann;
      ann.provider = j.value("provider", std::string("file"));
      id_ = ann.provider;
      for (const auto& jt : j.at("tokens")) {
        AnnotatedToken t;
        t.text = jt.at("text").get<std::string>();
        t.lemma = jt.value("lemma", std::string());
        t.pos = jt.value("pos", std::string());
        t.expletive = jt.value("expletive", false);
        if (jt.contains("gender") && jt["gender"].is_string())
          t.gender = parse_gender(jt["gender"].get<std::string>());
        ann.tokens.push_back(std::move(t));
      }
      entries_[nfc(j.at("text").get<std::string>())] = std::move(ann);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(line_no, e.what());
    }
  }
}

std::optional<SyntacticAnnotation> FileAnnotationProvider::annotate(
    std::string_view sentence, std::string_view) const {
  auto it = entries_.find(nfc(sentence));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

}  // namespace icp
