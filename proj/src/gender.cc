#include "icp/gender.h"

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "icp/error.h"
#include "icp/resources.h"
#include "icp/text.h"

namespace icp {

using nlohmann::json;

std::string GenderLexicon::normalize(std::string_view token) const {
  std::string t = nfc(token);
  if (!case_sensitive) t = fold_case(t);
  if (fold_diacritics) t = strip_diacritics(t);
  return t;
}

namespace {

std::vector<std::string> strings(const json& j, const char* key) {
  if (!j.contains(key)) return {};
  return j[key].get<std::vector<std::string>>();
}

std::set<std::string> normalized_set(const GenderLexicon& lex, const json& j, const char* key) {
  std::set<std::string> out;
  for (const auto& s : strings(j, key)) out.insert(lex.normalize(s));
  return out;
}

std::vector<std::string> normalized_list(const GenderLexicon& lex, const json& j,
                                         const char* key) {
  std::vector<std::string> out;
  for (const auto& s : strings(j, key)) out.push_back(lex.normalize(s));
  // longest first so "las" wins over "la"
  std::stable_sort(out.begin(), out.end(),
                   [](const std::string& a, const std::string& b) { return a.size() > b.size(); });
  return out;
}

}  // namespace

GenderLexicon GenderLexicon::from_json(std::string_view json_text) {
  GenderLexicon lex;
  try {
    json j = json::parse(json_text);
    lex.lang = j.at("lang").get<std::string>();
    std::string match = j.value("match", std::string("token"));
    if (match != "token" && match != "substring")
      throw ConfigError("match must be 'token' or 'substring'");
    lex.substring_match = match == "substring";
    lex.case_sensitive = j.value("case_sensitive", false);
    lex.fold_diacritics = j.value("fold_diacritics", false);
    lex.min_verb_length = j.value("min_verb_length", std::size_t{4});
    const json& pr = j.at("pronouns");
    lex.pronouns_feminine = normalized_set(lex, pr, "feminine");
    lex.pronouns_masculine = normalized_set(lex, pr, "masculine");
    if (j.contains("clitics")) {
      const json& c = j["clitics"];
      lex.clitics.feminine = normalized_set(lex, c, "feminine");
      lex.clitics.masculine = normalized_set(lex, c, "masculine");
      lex.clitics.triggers_before = normalized_set(lex, c, "triggers_before");
    }
    if (j.contains("hyphen_clitics")) {
      const json& c = j["hyphen_clitics"];
      lex.hyphen_clitics.feminine = normalized_set(lex, c, "feminine");
      lex.hyphen_clitics.masculine = normalized_set(lex, c, "masculine");
    }
    if (j.contains("enclitics")) {
      const json& e = j["enclitics"];
      auto& en = lex.enclitics;
      en.feminine = normalized_list(lex, e, "feminine");
      en.masculine = normalized_list(lex, e, "masculine");
      en.infixes = normalized_list(lex, e, "infixes");
      en.host_suffixes = normalized_list(lex, e, "host_suffixes");
      en.min_host_length = e.value("min_host_length", std::size_t{3});
      en.imperative_host_endings = normalized_list(lex, e, "imperative_host_endings");
      en.imperative_min_host_length = e.value("imperative_min_host_length", std::size_t{5});
      en.exclusions = normalized_set(lex, e, "exclusions");
    }
    if (j.contains("participle_agreement")) {
      const json& p = j["participle_agreement"];
      auto& pa = lex.participles;
      pa.elided = normalized_set(lex, p, "elided");
      pa.auxiliaries = normalized_set(lex, p, "auxiliaries");
      pa.skippable = normalized_set(lex, p, "skippable");
      pa.feminine_suffixes = normalized_list(lex, p, "feminine_suffixes");
      pa.masculine_suffixes = normalized_list(lex, p, "masculine_suffixes");
    }
    lex.function_words = normalized_set(lex, j, "function_words");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("gender lexicon: ") + e.what());
  }
  return lex;
}

GenderLexiconRegistry GenderLexiconRegistry::with_builtins() {
  GenderLexiconRegistry reg;
  for (const char* name : {"lexicons/gender_es.json", "lexicons/gender_fr.json",
                           "lexicons/gender_de.json", "lexicons/gender_ja.json"})
    reg.add(GenderLexicon::from_json(resource(name)));
  return reg;
}

void GenderLexiconRegistry::add(GenderLexicon lexicon) {
  std::string lang = lexicon.lang;
  lexicons_[lang] = std::move(lexicon);
}

void GenderLexiconRegistry::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read gender lexicon " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  add(GenderLexicon::from_json(ss.str()));
}

bool GenderLexiconRegistry::has(std::string_view lang) const {
  return lexicons_.find(lang) != lexicons_.end();
}

const GenderLexicon& GenderLexiconRegistry::get(std::string_view lang) const {
  auto it = lexicons_.find(lang);
  if (it == lexicons_.end())
    throw UnsupportedLanguage("no gender lexicon for '" + std::string(lang) + "'");
  return it->second;
}

GenderLexiconRegistry& default_gender_lexicons() {
  static GenderLexiconRegistry reg = GenderLexiconRegistry::with_builtins();
  return reg;
}

Gender GenderEvidence::label() const {
  if (!feminine.empty() && masculine.empty()) return Gender::Feminine;
  if (!masculine.empty() && feminine.empty()) return Gender::Masculine;
  return Gender::Undetermined;
}

namespace {

bool followed_by_apostrophe(std::string_view text, std::size_t pos) {
  if (pos >= text.size()) return false;
  return text[pos] == '\'' || text.substr(pos, 3) == "\xE2\x80\x99";
}

bool preceded_by_hyphen(std::string_view text, std::size_t pos) {
  return pos > 0 && text[pos - 1] == '-';
}

bool ends_with_any(const std::string& s, const std::vector<std::string>& suffixes) {
  for (const auto& suf : suffixes)
    if (s.size() > suf.size() && ends_with(s, suf)) return true;
  return false;
}

// Returns the clitic gender when `tok` is a verb with an attached object
// clitic: infinitive/gerund hosts ("verlo", "mirándola", "bebérsela") or a
// long imperative host ("guárdalo").
std::optional<Gender> enclitic_gender(const GenderLexicon& lex, const std::string& tok) {
  const auto& en = lex.enclitics;
  if (en.exclusions.count(tok)) return std::nullopt;
  auto try_clitics = [&](const std::vector<std::string>& clitics) -> bool {
    for (const auto& c : clitics) {
      if (tok.size() <= c.size() || !ends_with(tok, c)) continue;
      std::vector<std::string> hosts{tok.substr(0, tok.size() - c.size())};
      for (const auto& inf : en.infixes)
        if (hosts[0].size() > inf.size() && ends_with(hosts[0], inf))
          hosts.push_back(hosts[0].substr(0, hosts[0].size() - inf.size()));
      for (const auto& h : hosts) {
        std::size_t len = utf8_length(h);
        if (len >= en.min_host_length && ends_with_any(h, en.host_suffixes)) return true;
        if (len >= en.imperative_min_host_length) {
          for (const auto& e : en.imperative_host_endings)
            if (ends_with(h, e)) return true;
        }
      }
    }
    return false;
  };
  if (try_clitics(en.feminine)) return Gender::Feminine;
  if (try_clitics(en.masculine)) return Gender::Masculine;
  return std::nullopt;
}

std::optional<Gender> participle_gender(const GenderLexicon& lex, const std::string& tok) {
  const auto& pa = lex.participles;
  if (ends_with_any(tok, pa.feminine_suffixes)) return Gender::Feminine;
  if (ends_with_any(tok, pa.masculine_suffixes)) return Gender::Masculine;
  return std::nullopt;
}

void add(GenderEvidence& ev, Gender g, const std::string& surface) {
  (g == Gender::Feminine ? ev.feminine : ev.masculine).push_back(surface);
}

GenderEvidence substring_evidence(std::string_view sentence, const GenderLexicon& lex) {
  GenderEvidence ev;
  ev.has_verb = !trim(sentence).empty();
  const std::string norm = lex.normalize(sentence);
  std::vector<std::pair<std::string, Gender>> forms;
  for (const auto& f : lex.pronouns_feminine) forms.emplace_back(f, Gender::Feminine);
  for (const auto& f : lex.pronouns_masculine) forms.emplace_back(f, Gender::Masculine);
  std::stable_sort(forms.begin(), forms.end(),
                   [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
  std::vector<bool> consumed(norm.size(), false);
  for (const auto& [form, g] : forms) {
    std::size_t pos = 0;
    while ((pos = norm.find(form, pos)) != std::string::npos) {
      bool free = std::none_of(consumed.begin() + pos, consumed.begin() + pos + form.size(),
                               [](bool b) { return b; });
      if (free) {
        std::fill(consumed.begin() + pos, consumed.begin() + pos + form.size(), true);
        add(ev, g, form);
      }
      pos += form.size();
    }
  }
  return ev;
}

}  // namespace

GenderEvidence gender_evidence(std::string_view sentence, const GenderLexicon& lex,
                               const SyntacticAnnotation* annotation) {
  if (lex.substring_match) return substring_evidence(sentence, lex);

  GenderEvidence ev;
  auto toks = word_tokens(sentence);
  if (annotation) check_annotation(sentence, *annotation);
  std::vector<std::string> norm;
  norm.reserve(toks.size());
  for (const auto& t : toks) norm.push_back(lex.normalize(t.text));

  for (std::size_t i = 0; i < toks.size(); ++i) {
    const std::string& n = norm[i];
    const std::string& surface = toks[i].text;
    bool matched = false;

    if (lex.pronouns_feminine.count(n)) {
      add(ev, Gender::Feminine, surface);
      matched = true;
    } else if (lex.pronouns_masculine.count(n)) {
      add(ev, Gender::Masculine, surface);
      matched = true;
    }

    if (!matched && preceded_by_hyphen(sentence, toks[i].begin)) {
      if (lex.hyphen_clitics.feminine.count(n)) {
        add(ev, Gender::Feminine, surface);
        matched = true;
      } else if (lex.hyphen_clitics.masculine.count(n)) {
        add(ev, Gender::Masculine, surface);
        matched = true;
      }
    }

    if (!matched && i > 0 && lex.clitics.triggers_before.count(norm[i - 1])) {
      if (lex.clitics.feminine.count(n)) {
        add(ev, Gender::Feminine, surface);
        matched = true;
      } else if (lex.clitics.masculine.count(n)) {
        add(ev, Gender::Masculine, surface);
        matched = true;
      }
    }

    if (!matched && lex.participles.elided.count(n) &&
        followed_by_apostrophe(sentence, toks[i].end) && i + 1 < toks.size() &&
        lex.participles.auxiliaries.count(norm[i + 1])) {
      std::size_t j = i + 2;
      while (j < toks.size() && lex.participles.skippable.count(norm[j])) ++j;
      if (j < toks.size()) {
        if (auto g = participle_gender(lex, norm[j])) {
          add(ev, *g, toks[j].text);
          ev.has_verb = true;
        }
      }
    }

    if (!matched && !lex.enclitics.host_suffixes.empty()) {
      if (auto g = enclitic_gender(lex, n)) {
        add(ev, *g, surface);
        ev.has_verb = true;
        matched = true;
      }
    }

    if (annotation) {
      const auto& at = annotation->tokens[i];
      if (at.pos == "VERB" || at.pos == "AUX") ev.has_verb = true;
      if (!matched && at.pos == "PRON" && at.gender && *at.gender != Gender::Undetermined)
        add(ev, *at.gender, surface);
    } else if (!matched && utf8_length(surface) >= lex.min_verb_length &&
               !lex.function_words.count(n)) {
      ev.has_verb = true;
    }
  }
  return ev;
}

Gender classify_gender(std::string_view sentence, const GenderLexicon& lexicon) {
  return gender_evidence(sentence, lexicon).label();
}

Gender gender_classify_rule(std::string_view sentence, std::string_view lang) {
  if (lang != "es" && lang != "fr")
    throw UnsupportedLanguage("rule gender classifier supports es and fr, not '" +
                              std::string(lang) + "'");
  return classify_gender(sentence, default_gender_lexicons().get(lang));
}

namespace {

std::optional<Gender> english_pronoun_gender(std::string_view token) {
  std::string t = to_lower(token);
  if (t == "she" || t == "her" || t == "hers" || t == "herself") return Gender::Feminine;
  if (t == "he" || t == "him" || t == "his" || t == "himself") return Gender::Masculine;
  return std::nullopt;
}

}  // namespace

bool is_gendered_english_pronoun(std::string_view token) {
  return english_pronoun_gender(token).has_value();
}

GenderEvidence english_pronoun_evidence(std::string_view text) {
  GenderEvidence ev;
  for (const auto& t : word_tokens(text))
    if (auto g = english_pronoun_gender(t.text)) add(ev, *g, t.text);
  return ev;
}

std::string mask_gendered_pronouns(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t last = 0;
  for (const auto& t : word_tokens(text)) {
    if (!is_gendered_english_pronoun(t.text)) continue;
    out.append(text.substr(last, t.begin - last));
    out += "[pr]";
    last = t.end;
  }
  out.append(text.substr(last));
  return out;
}

std::size_t count_gendered_pronouns(std::string_view text) {
  std::size_t n = 0;
  for (const auto& t : word_tokens(text))
    if (is_gendered_english_pronoun(t.text)) ++n;
  return n;
}

}  // namespace icp
