#include "icp/formality.h"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "icp/error.h"
#include "icp/resources.h"
#include "icp/text.h"

namespace icp {

using nlohmann::json;

std::string to_string(FormalityLabel l) {
  switch (l) {
    case FormalityLabel::Formal: return "formal";
    case FormalityLabel::Informal: return "informal";
    case FormalityLabel::Undetermined: return "undetermined";
  }
  return "undetermined";
}

std::optional<FormalityLabel> parse_formality(std::string_view s) {
  std::string f = fold_case(trim(s));
  if (f == "formal") return FormalityLabel::Formal;
  if (f == "informal") return FormalityLabel::Informal;
  if (f == "undetermined" || f == "neutral") return FormalityLabel::Undetermined;
  return std::nullopt;
}

FormalityPolicy parse_formality_policy(std::string_view s) {
  std::string f = fold_case(s);
  if (f == "strict") return FormalityPolicy::Strict;
  if (f == "relaxed") return FormalityPolicy::Relaxed;
  throw ConfigError("unknown formality policy '" + std::string(s) + "'");
}

std::string to_string(Marker m) {
  switch (m) {
    case Marker::VerbFormal: return "is_verb_formal";
    case Marker::VerbInformal: return "is_verb_informal";
    case Marker::PronounFormal: return "is_pronoun_formal";
    case Marker::PronounInformal: return "is_pronoun_informal";
    case Marker::DeterminantFormal: return "is_determinant_formal";
    case Marker::DeterminantInformal: return "is_determinant_informal";
  }
  return "";
}

bool MarkerSet::any_formal() const {
  return is(Marker::VerbFormal) || is(Marker::PronounFormal) ||
         is(Marker::DeterminantFormal);
}

bool MarkerSet::any_informal() const {
  return is(Marker::VerbInformal) || is(Marker::PronounInformal) ||
         is(Marker::DeterminantInformal);
}

std::string FormalityRules::normalize(std::string_view token) const {
  std::string t = nfc(token);
  if (!case_sensitive) t = fold_case(t);
  if (fold_diacritics) t = strip_diacritics(t);
  return t;
}

namespace {

std::optional<SuffixRule> suffix_rule(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  SuffixRule r;
  r.suffixes = j[key].at("suffixes").get<std::vector<std::string>>();
  std::string q = j[key].value("quantifier", std::string("any"));
  if (q != "any" && q != "all") throw ConfigError("quantifier must be 'any' or 'all'");
  r.require_all = q == "all";
  return r;
}

std::vector<FormList> form_lists(const json& j, const char* key) {
  std::vector<FormList> out;
  if (!j.contains(key)) return out;
  for (const auto& jl : j[key]) {
    FormList fl;
    fl.forms = jl.at("forms").get<std::vector<std::string>>();
    std::string ex = jl.value("exclamation", std::string("any"));
    if (ex == "present") fl.exclamation = ExclamationCondition::Present;
    else if (ex == "absent") fl.exclamation = ExclamationCondition::Absent;
    else if (ex == "any") fl.exclamation = ExclamationCondition::Any;
    else throw ConfigError("exclamation must be any/present/absent");
    out.push_back(std::move(fl));
  }
  return out;
}

void check_requires(const std::vector<std::string>& req) {
  if (req.empty()) throw ConfigError("formal_requires/informal_requires must not be empty");
  for (const auto& r : req)
    if (r != "verb" && r != "pronoun" && r != "determinant")
      throw ConfigError("unknown requirement '" + r + "'");
}

bool condition_holds(ExclamationCondition c, bool has_bang) {
  switch (c) {
    case ExclamationCondition::Any: return true;
    case ExclamationCondition::Present: return has_bang;
    case ExclamationCondition::Absent: return !has_bang;
  }
  return true;
}

bool in_lists(const FormalityRules& rules, const std::vector<FormList>& lists,
              const std::string& norm, bool has_bang) {
  for (const auto& fl : lists) {
    if (!condition_holds(fl.exclamation, has_bang)) continue;
    for (const auto& f : fl.forms)
      if (rules.normalize(f) == norm) return true;
  }
  return false;
}

bool has_suffix(const FormalityRules& rules, const SuffixRule& r, const std::string& norm) {
  for (const auto& s : r.suffixes) {
    std::string ns = rules.normalize(s);
    if (norm.size() > ns.size() && ends_with(norm, ns)) return true;
  }
  return false;
}

void set_flag(MarkerSet& m, Marker k, const std::string& token) {
  auto i = static_cast<std::size_t>(k);
  m.flags[i] = true;
  m.evidence[i].push_back(token);
}

MarkerSet detect_substring(std::string_view sentence, const FormalityRules& rules) {
  MarkerSet m;
  const bool bang = sentence.find('!') != std::string_view::npos;
  const std::string norm = rules.normalize(sentence);
  auto scan_lists = [&](const std::vector<FormList>& lists, Marker k) {
    for (const auto& fl : lists) {
      if (!condition_holds(fl.exclamation, bang)) continue;
      for (const auto& f : fl.forms)
        if (norm.find(rules.normalize(f)) != std::string::npos) set_flag(m, k, f);
    }
  };
  auto scan_suffixes = [&](const std::optional<SuffixRule>& r, Marker k) {
    if (!r) return;
    for (const auto& s : r->suffixes)
      if (norm.find(rules.normalize(s)) != std::string::npos) set_flag(m, k, s);
  };
  scan_lists(rules.pronoun_formal, Marker::PronounFormal);
  scan_lists(rules.pronoun_informal, Marker::PronounInformal);
  scan_lists(rules.determinant_formal, Marker::DeterminantFormal);
  scan_lists(rules.determinant_informal, Marker::DeterminantInformal);
  scan_suffixes(rules.verb_formal, Marker::VerbFormal);
  scan_suffixes(rules.verb_informal, Marker::VerbInformal);
  return m;
}

}  // namespace

FormalityRules FormalityRules::from_json(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("formality rules: ") + e.what());
  }
  FormalityRules r;
  try {
    r.lang = j.at("lang").get<std::string>();
    std::string match = j.value("match", std::string("token"));
    if (match != "token" && match != "substring")
      throw ConfigError("match must be 'token' or 'substring'");
    r.substring_match = match == "substring";
    r.case_sensitive = j.value("case_sensitive", false);
    r.fold_diacritics = j.value("fold_diacritics", false);
    r.min_verb_length = j.value("min_verb_length", std::size_t{4});
    r.verb_formal = suffix_rule(j, "verb_formal");
    r.verb_informal = suffix_rule(j, "verb_informal");
    r.pronoun_formal = form_lists(j, "pronoun_formal");
    r.pronoun_informal = form_lists(j, "pronoun_informal");
    r.determinant_formal = form_lists(j, "determinant_formal");
    r.determinant_informal = form_lists(j, "determinant_informal");
    r.formal_requires = j.at("formal_requires").get<std::vector<std::string>>();
    r.informal_requires = j.at("informal_requires").get<std::vector<std::string>>();
    if (j.contains("function_words"))
      for (const auto& w : j["function_words"]) r.function_words.insert(r.normalize(w.get<std::string>()));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("formality rules: ") + e.what());
  }
  check_requires(r.formal_requires);
  check_requires(r.informal_requires);
  return r;
}

FormalityRuleRegistry FormalityRuleRegistry::with_builtins() {
  FormalityRuleRegistry reg;
  for (const char* name : {"rules/es.json", "rules/fr.json", "rules/de.json"})
    reg.add(FormalityRules::from_json(resource(name)));
  return reg;
}

void FormalityRuleRegistry::add(FormalityRules rules) {
  std::string lang = rules.lang;
  rules_[lang] = std::move(rules);
}

void FormalityRuleRegistry::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read formality rules " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  add(FormalityRules::from_json(ss.str()));
}

bool FormalityRuleRegistry::has(std::string_view lang) const {
  return rules_.find(lang) != rules_.end();
}

const FormalityRules& FormalityRuleRegistry::get(std::string_view lang) const {
  auto it = rules_.find(lang);
  if (it == rules_.end())
    throw UnsupportedLanguage("no formality rules loaded for '" + std::string(lang) + "'");
  return it->second;
}

FormalityRuleRegistry& default_formality_rules() {
  static FormalityRuleRegistry reg = FormalityRuleRegistry::with_builtins();
  return reg;
}

MarkerSet detect_formality_markers(std::string_view sentence, const FormalityRules& rules,
                                   const SyntacticAnnotation* annotation) {
  if (rules.substring_match) return detect_substring(sentence, rules);

  MarkerSet m;
  const bool bang = sentence.find('!') != std::string_view::npos;
  auto toks = word_tokens(sentence);
  if (annotation) check_annotation(sentence, *annotation);

  std::vector<std::string> verbs;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const std::string& surface = toks[i].text;
    const std::string norm = rules.normalize(surface);
    const std::string pos = annotation ? annotation->tokens[i].pos : std::string();
    const bool pron_ok = !annotation || pos == "PRON";
    const bool det_ok = !annotation || pos == "DET";

    bool matched = false;
    if (pron_ok && in_lists(rules, rules.pronoun_formal, norm, bang)) {
      set_flag(m, Marker::PronounFormal, surface);
      matched = true;
    }
    if (pron_ok && in_lists(rules, rules.pronoun_informal, norm, bang)) {
      set_flag(m, Marker::PronounInformal, surface);
      matched = true;
    }
    if (det_ok && in_lists(rules, rules.determinant_formal, norm, bang)) {
      set_flag(m, Marker::DeterminantFormal, surface);
      matched = true;
    }
    if (det_ok && in_lists(rules, rules.determinant_informal, norm, bang)) {
      set_flag(m, Marker::DeterminantInformal, surface);
      matched = true;
    }

    bool is_verb;
    if (annotation) {
      is_verb = pos == "VERB" || pos == "AUX";
    } else {
      is_verb = !matched && utf8_length(surface) >= rules.min_verb_length &&
                !rules.function_words.count(norm);
    }
    if (is_verb) verbs.push_back(surface);
  }

  auto apply_suffixes = [&](const std::optional<SuffixRule>& r, Marker k) {
    if (!r || verbs.empty()) return;
    std::vector<std::string> hits;
    for (const auto& v : verbs)
      if (has_suffix(rules, *r, rules.normalize(v))) hits.push_back(v);
    if (hits.empty()) return;
    if (r->require_all && hits.size() != verbs.size()) return;
    for (const auto& h : hits) set_flag(m, k, h);
  };
  apply_suffixes(rules.verb_formal, Marker::VerbFormal);
  apply_suffixes(rules.verb_informal, Marker::VerbInformal);
  return m;
}

MarkerSet detect_formality_markers(std::string_view sentence, std::string_view lang) {
  return detect_formality_markers(sentence, default_formality_rules().get(lang));
}

namespace {

bool requirement(const MarkerSet& m, const std::string& req, bool formal) {
  if (req == "verb") return m.is(formal ? Marker::VerbFormal : Marker::VerbInformal);
  if (req == "pronoun") return m.is(formal ? Marker::PronounFormal : Marker::PronounInformal);
  return m.is(formal ? Marker::DeterminantFormal : Marker::DeterminantInformal);
}

}  // namespace

FormalityLabel classify_markers(const MarkerSet& m, const FormalityRules& rules,
                                FormalityPolicy policy) {
  bool formal, informal;
  if (policy == FormalityPolicy::Strict) {
    formal = true;
    for (const auto& r : rules.formal_requires) formal = formal && requirement(m, r, true);
    informal = true;
    for (const auto& r : rules.informal_requires) informal = informal && requirement(m, r, false);
  } else {
    formal = m.any_formal();
    informal = m.any_informal();
  }
  if (formal && !informal) return FormalityLabel::Formal;
  if (informal && !formal) return FormalityLabel::Informal;
  return FormalityLabel::Undetermined;
}

FormalityLabel classify_formality(std::string_view sentence, const FormalityRules& rules,
                                  FormalityPolicy policy, const SyntacticAnnotation* annotation) {
  return classify_markers(detect_formality_markers(sentence, rules, annotation), rules, policy);
}

FormalityLabel classify_formality(std::string_view sentence, std::string_view lang,
                                  FormalityPolicy policy) {
  const auto& rules = default_formality_rules().get(lang);
  return classify_formality(sentence, rules, policy);
}

}  // namespace icp
