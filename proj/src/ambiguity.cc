#include "icp/ambiguity.h"

#include <algorithm>
#include <fstream>
#include <set>
#include <tuple>

#include <nlohmann/json.hpp>
#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include "icp/error.h"
#include "icp/text.h"

namespace icp {

using nlohmann::json;

std::string to_string(AmbiguityType t) {
  switch (t) {
    case AmbiguityType::ItResolution: return "it_resolution";
    case AmbiguityType::Polysemy: return "polysemy";
    case AmbiguityType::Formality: return "formality";
    case AmbiguityType::NeutralName: return "neutral_name";
    case AmbiguityType::NeutralProfession: return "neutral_profession";
  }
  return "";
}

AmbiguityType parse_ambiguity_type(std::string_view s) {
  std::string f = fold_case(s);
  std::replace(f.begin(), f.end(), '-', '_');
  if (f == "it_resolution" || f == "it") return AmbiguityType::ItResolution;
  if (f == "polysemy") return AmbiguityType::Polysemy;
  if (f == "formality") return AmbiguityType::Formality;
  if (f == "neutral_name" || f == "neutral_names") return AmbiguityType::NeutralName;
  if (f == "neutral_profession" || f == "neutral_professions")
    return AmbiguityType::NeutralProfession;
  throw ConfigError("unknown ambiguity type '" + std::string(s) + "'");
}

std::string label_string(const ClassLabel& label) {
  if (auto f = std::get_if<FormalityLabel>(&label)) return to_string(*f);
  if (auto g = std::get_if<Gender>(&label)) return to_string(*g);
  const auto& s = std::get<SenseId>(label);
  return s.word + ":" + s.gloss;
}

void validate_sample(const AmbiguitySample& s) {
  if (trim(s.source).empty()) throw ConfigError("sample " + s.id + " has an empty source");
  bool ok = false;
  switch (s.ambiguity) {
    case AmbiguityType::Formality: {
      auto f = std::get_if<FormalityLabel>(&s.label);
      ok = f && *f != FormalityLabel::Undetermined;
      break;
    }
    case AmbiguityType::Polysemy:
      ok = std::holds_alternative<SenseId>(s.label);
      break;
    default: {
      auto g = std::get_if<Gender>(&s.label);
      ok = g && *g != Gender::Undetermined;
    }
  }
  if (!ok)
    throw ConfigError("sample " + s.id + ": label '" + label_string(s.label) +
                      "' does not fit " + to_string(s.ambiguity));
}

json to_json(const AmbiguitySample& s) {
  json label;
  if (auto sense = std::get_if<SenseId>(&s.label))
    label = {{"word", sense->word}, {"gloss", sense->gloss}};
  else
    label = label_string(s.label);
  return {{"id", s.id},           {"ambiguity", to_string(s.ambiguity)},
          {"lang_pair", to_string(s.lang_pair)}, {"source", s.source},
          {"context", s.context}, {"target", s.target},
          {"label", label}};
}

AmbiguitySample sample_from_json(const json& j) {
  AmbiguitySample s;
  s.id = j.at("id").get<std::string>();
  s.ambiguity = parse_ambiguity_type(j.at("ambiguity").get<std::string>());
  s.lang_pair = parse_lang_pair(j.at("lang_pair").get<std::string>());
  s.source = j.at("source").get<std::string>();
  s.context = j.value("context", "");
  s.target = j.value("target", "");
  const json& l = j.at("label");
  if (l.is_object()) {
    s.label = SenseId{l.at("word").get<std::string>(), l.value("gloss", "")};
  } else {
    std::string v = l.get<std::string>();
    if (s.ambiguity == AmbiguityType::Formality) {
      auto f = parse_formality(v);
      if (!f) throw ConfigError("bad formality label '" + v + "'");
      s.label = *f;
    } else {
      auto g = parse_gender(v);
      if (!g) throw ConfigError("bad gender label '" + v + "'");
      s.label = *g;
    }
  }
  validate_sample(s);
  return s;
}

std::string dataset_to_jsonl(const std::vector<AmbiguitySample>& samples) {
  std::string out;
  for (const auto& s : samples) out += to_json(s).dump() + "\n";
  return out;
}

std::vector<AmbiguitySample> dataset_from_jsonl(std::string_view content) {
  std::vector<AmbiguitySample> out;
  std::size_t line_no = 0, pos = 0;
  while (pos < content.size()) {
    auto nl = content.find('\n', pos);
    auto line = content.substr(pos, nl == std::string_view::npos ? std::string_view::npos
                                                                  : nl - pos);
    pos = nl == std::string_view::npos ? content.size() : nl + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(sample_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw FormatError(line_no, e.what());
    } catch (const ValidationError& e) {
      throw FormatError(line_no, e.what());
    }
  }
  return out;
}

void write_dataset(const std::filesystem::path& path,
                   const std::vector<AmbiguitySample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << dataset_to_jsonl(samples);
}

std::vector<AmbiguitySample> read_dataset(const std::filesystem::path& path) {
  return dataset_from_jsonl(read_text_file(path));
}

bool contains_token(std::string_view text, std::string_view token) {
  std::string want = fold_case(token);
  for (const auto& t : word_tokens(text))
    if (fold_case(t.text) == want) return true;
  return false;
}

std::optional<Detection> detect_formality_sample(const SentencePair& pair,
                                                 const FormalityRules& rules,
                                                 FormalityPolicy policy, std::size_t max_words) {
  if (!contains_token(pair.source, "you") && !contains_token(pair.source, "your"))
    return std::nullopt;
  if (word_count(pair.source) >= max_words) return std::nullopt;
  auto label = classify_formality(pair.target, rules, policy);
  if (label == FormalityLabel::Undetermined) return std::nullopt;
  return Detection{pair.source, pair.target, label};
}

std::optional<Detection> detect_it_sample(const SentencePair& pair,
                                          const SyntacticAnnotation& src_ann,
                                          const GenderLexicon& tgt_lexicon,
                                          const SyntacticAnnotation* tgt_ann) {
  if (!contains_token(pair.source, "it")) return std::nullopt;
  check_annotation(pair.source, src_ann);
  bool referential = false;
  for (const auto& t : src_ann.tokens)
    if (fold_case(t.text) == "it" && !t.expletive) referential = true;
  if (!referential) return std::nullopt;
  auto ev = gender_evidence(pair.target, tgt_lexicon, tgt_ann);
  if (!ev.has_verb) return std::nullopt;
  Gender g = ev.label();
  if (g == Gender::Undetermined) return std::nullopt;
  return Detection{pair.source, pair.target, g};
}

namespace {

bool starts_upper(std::string_view s) {
  if (s.empty()) return false;
  int32_t i = 0;
  UChar32 c;
  U8_NEXT(s.data(), i, static_cast<int32_t>(s.size()), c);
  return c >= 0 && u_isupper(c);
}

}  // namespace

std::optional<Detection> detect_neutral_name_sample(const SentencePair& pair,
                                                    const NameTable& names,
                                                    const GenderLexicon& tgt_lexicon,
                                                    const SyntacticAnnotation* tgt_ann,
                                                    double unisex_threshold) {
  bool has_name = false;
  for (const auto& t : word_tokens(pair.source)) {
    if (!starts_upper(t.text)) continue;
    auto stats = names.find(t.text);
    if (stats && stats->unisex(unisex_threshold)) {
      has_name = true;
      break;
    }
  }
  if (!has_name) return std::nullopt;
  GenderEvidence ev = english_pronoun_evidence(pair.source);
  if (ev.feminine.empty() && ev.masculine.empty())
    ev = gender_evidence(pair.target, tgt_lexicon, tgt_ann);
  Gender g = ev.label();
  if (g == Gender::Undetermined) return std::nullopt;
  return Detection{mask_gendered_pronouns(pair.source), pair.target, g};
}

std::vector<std::string> polysemous_words(const SenseInventory& inventory,
                                          const PolysemyOptions& opts) {
  std::vector<std::string> out;
  for (const auto& w : inventory.words())
    if (utf8_length(w) >= opts.min_len && count_senses(w, inventory) >= opts.min_senses)
      out.push_back(w);
  return out;
}

namespace {

std::vector<std::string> folded_tokens(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& t : word_tokens(text)) out.push_back(fold_case(t.text));
  return out;
}

bool contains_phrase(const std::vector<std::string>& hay, std::string_view text,
                     std::string_view phrase, bool substring) {
  if (substring) return fold_case(text).find(fold_case(phrase)) != std::string::npos;
  auto needle = folded_tokens(phrase);
  if (needle.empty() || needle.size() > hay.size()) return false;
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

}  // namespace

std::vector<AmbiguitySample> build_polysemy_samples(const std::vector<ParallelDocument>& corpus,
                                                    const SenseInventory& inventory,
                                                    const TranslationCandidates& candidates,
                                                    const PolysemyOptions& opts) {
  std::vector<AmbiguitySample> out;
  auto words = polysemous_words(inventory, opts);
  for (const auto& doc : corpus) {
    std::string lang = target_lang(doc.lang_pair);
    bool substring = lang == "ja";
    for (const auto& pair : doc.pairs) {
      auto src_tokens = folded_tokens(pair.source);
      auto tgt_tokens = folded_tokens(pair.target);
      for (const auto& w : words) {
        if (std::find(src_tokens.begin(), src_tokens.end(), fold_case(w)) == src_tokens.end())
          continue;
        const auto* cands = candidates.find(w, lang);
        if (!cands) continue;
        const TranslationCandidate* match = nullptr;
        std::size_t hits = 0;
        for (const auto& c : *cands)
          if (contains_phrase(tgt_tokens, pair.target, c.form, substring)) {
            ++hits;
            match = &c;
          }
        if (hits != 1) continue;
        AmbiguitySample s;
        s.id = to_string(doc.lang_pair) + "-polysemy-" + doc.doc_id + "-" +
               std::to_string(pair.index) + "-" + w;
        s.ambiguity = AmbiguityType::Polysemy;
        s.lang_pair = doc.lang_pair;
        s.source = w;
        s.context = pair.source;
        s.target = match->form;
        s.label = SenseId{w, match->gloss.empty() ? match->form : match->gloss};
        out.push_back(std::move(s));
      }
    }
  }
  return out;
}

namespace {

std::vector<std::vector<std::string>> parse_csv_rows(std::string_view csv) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < csv.size(); ++i) {
    char c = csv[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < csv.size() && csv[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    any = true;
    if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < csv.size() && csv[i + 1] == '\n') ++i;
      row.push_back(std::move(field));
      field.clear();
      if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      field += c;
    }
  }
  if (quoted) throw FormatError(rows.size() + 1, "unterminated quoted field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::vector<BiographyRecord> parse_biographies_csv(std::string_view csv) {
  auto rows = parse_csv_rows(csv);
  if (rows.empty()) return {};
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < rows[0].size(); ++i) col[trim(rows[0][i])] = i;
  for (const char* need : {"sourceText", "translatedText", "perceivedGender", "documentID"})
    if (!col.count(need)) throw FormatError(1, std::string("missing column ") + need);
  if (!col.count("targetLanguage") && !col.count("lang_pair"))
    throw FormatError(1, "missing column targetLanguage");
  std::vector<BiographyRecord> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    auto get = [&](const std::string& name) -> std::string {
      std::size_t i = col.at(name);
      if (i >= row.size()) throw FormatError(r + 1, "row has too few columns");
      return row[i];
    };
    BiographyRecord b;
    b.document_id = get("documentID");
    try {
      b.lang_pair = col.count("lang_pair") ? parse_lang_pair(get("lang_pair"))
                                           : lang_pair_for_target(get("targetLanguage"));
    } catch (const UnsupportedLanguage& e) {
      throw FormatError(r + 1, e.what());
    }
    b.source = nfc(get("sourceText"));
    b.target = nfc(get("translatedText"));
    b.perceived_gender = parse_gender(get("perceivedGender")).value_or(Gender::Undetermined);
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<BiographyRecord> load_biographies(const std::filesystem::path& path) {
  return parse_biographies_csv(read_text_file(path));
}

DatasetConfig DatasetConfig::from_json(const json& j) {
  DatasetConfig c;
  try {
    for (const auto& t : j.at("types")) {
      auto type = parse_ambiguity_type(t.get<std::string>());
      if (std::find(c.types.begin(), c.types.end(), type) != c.types.end())
        throw ConfigError("duplicate type " + to_string(type));
      c.types.push_back(type);
    }
    for (const auto& l : j.at("langs")) {
      try {
        c.langs.push_back(parse_lang_pair(l.get<std::string>()));
      } catch (const UnsupportedLanguage& e) {
        throw ConfigError(e.what());
      }
    }
    c.policy = parse_formality_policy(j.value("policy", "strict"));
    c.max_words = j.value("max_words", std::size_t{20});
    if (j.contains("context")) {
      const auto& cx = j["context"];
      c.context.min_sents = cx.value("min_sents", c.context.min_sents);
      c.context.max_sents = cx.value("max_sents", c.context.max_sents);
      c.context.threshold = cx.value("threshold", c.context.threshold);
    }
    if (j.contains("per_class_cap")) {
      if (!j["per_class_cap"].is_number_integer() || j["per_class_cap"].get<long long>() < 0)
        throw ConfigError("per_class_cap must be a non-negative integer");
      c.per_class_cap = j["per_class_cap"].get<std::size_t>();
    }
    if (j.contains("polysemy")) {
      c.polysemy.min_senses = j["polysemy"].value("min_senses", c.polysemy.min_senses);
      c.polysemy.min_len = j["polysemy"].value("min_len", c.polysemy.min_len);
    }
    c.unisex_threshold = j.value("unisex_threshold", 0.40);
    if (j.contains("resources")) {
      const auto& r = j["resources"];
      c.senses_path = r.value("senses", "");
      c.candidates_path = r.value("candidates", "");
      c.names_path = r.value("names", "");
      c.biographies_path = r.value("biographies", "");
      c.annotations_path = r.value("annotations", "");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dataset config: ") + e.what());
  }
  if (c.types.empty()) throw ConfigError("dataset config lists no ambiguity types");
  if (c.langs.empty()) throw ConfigError("dataset config lists no language pairs");
  if (c.context.min_sents == 0 || c.context.min_sents > c.context.max_sents)
    throw ConfigError("context bounds require 1 <= min_sents <= max_sents");
  if (c.unisex_threshold < 0 || c.unisex_threshold >= 0.5)
    throw ConfigError("unisex_threshold must lie in [0, 0.5)");
  return c;
}

namespace {

struct Builder {
  const DatasetConfig& cfg;
  Dataset ds;
  std::set<std::tuple<LangPair, AmbiguityType, std::string, std::string>> seen;
  std::map<std::tuple<LangPair, AmbiguityType, std::string>, std::size_t> per_class;

  void emit(AmbiguitySample s, const std::string& en_sentence, const std::string& tgt_sentence) {
    auto key = std::make_tuple(s.lang_pair, s.ambiguity, nfc(en_sentence), nfc(tgt_sentence));
    if (!seen.insert(key).second) return;
    auto cls = std::make_tuple(s.lang_pair, s.ambiguity, label_string(s.label));
    if (cfg.per_class_cap && per_class[cls] >= cfg.per_class_cap) return;
    ++per_class[cls];
    validate_sample(s);
    ds.samples.push_back(std::move(s));
  }
};

bool wanted(const DatasetConfig& cfg, LangPair lp) {
  return std::find(cfg.langs.begin(), cfg.langs.end(), lp) != cfg.langs.end();
}

std::optional<std::string> context_for(const ParallelDocument& doc, std::size_t anchor,
                                       ContextDirection dir, const ContextOptions& opts) {
  try {
    return extract_context(doc, anchor, dir, opts).render();
  } catch (const NoContext&) {
    return std::nullopt;
  }
}

AmbiguitySample make_sample(const ParallelDocument& doc, const SentencePair& pair,
                            AmbiguityType type, Detection det, std::string context) {
  AmbiguitySample s;
  s.id = to_string(doc.lang_pair) + "-" + to_string(type) + "-" + doc.doc_id + "-" +
         std::to_string(pair.index);
  s.ambiguity = type;
  s.lang_pair = doc.lang_pair;
  s.source = std::move(det.source);
  s.context = std::move(context);
  s.target = std::move(det.target);
  s.label = std::move(det.label);
  return s;
}

void require(const void* p, AmbiguityType t, const char* what) {
  if (!p) throw ConfigError(to_string(t) + " needs a " + what + " resource");
}

}  // namespace

Dataset build_dataset(const std::vector<ParallelDocument>& corpus, const DatasetConfig& cfg,
                      const DatasetInputs& in) {
  Builder b{cfg, {}, {}, {}};
  PatternAnnotator fallback;
  const AnnotationProvider& annotator = in.annotations ? *in.annotations : fallback;

  for (AmbiguityType type : cfg.types) {
    switch (type) {
      case AmbiguityType::Formality:
        for (const auto& doc : corpus) {
          if (!wanted(cfg, doc.lang_pair)) continue;
          std::string lang = target_lang(doc.lang_pair);
          if (!default_formality_rules().has(lang)) continue;
          const auto& rules = default_formality_rules().get(lang);
          for (const auto& pair : doc.pairs) {
            auto det = detect_formality_sample(pair, rules, cfg.policy, cfg.max_words);
            if (!det) continue;
            auto ctx = context_for(doc, pair.index, ContextDirection::Preceding, cfg.context);
            if (!ctx) continue;
            b.emit(make_sample(doc, pair, type, std::move(*det), *ctx), pair.source, pair.target);
          }
        }
        break;

      case AmbiguityType::ItResolution:
        for (const auto& doc : corpus) {
          if (!wanted(cfg, doc.lang_pair)) continue;
          const auto& lex = default_gender_lexicons().get(target_lang(doc.lang_pair));
          for (const auto& pair : doc.pairs) {
            if (!contains_token(pair.source, "it")) continue;
            auto ann = annotator.annotate(pair.source, "en");
            if (!ann)
              throw MissingAnnotation("no annotation for \"" + pair.source + "\" from " +
                                      annotator.id());
            auto det = detect_it_sample(pair, *ann, lex);
            if (!det) continue;
            auto ctx = context_for(doc, pair.index, ContextDirection::Preceding, cfg.context);
            if (!ctx) continue;
            b.emit(make_sample(doc, pair, type, std::move(*det), *ctx), pair.source, pair.target);
          }
        }
        break;

      case AmbiguityType::NeutralName:
        require(in.names, type, "names");
        for (const auto& doc : corpus) {
          if (!wanted(cfg, doc.lang_pair)) continue;
          const auto& lex = default_gender_lexicons().get(target_lang(doc.lang_pair));
          for (const auto& pair : doc.pairs) {
            auto det = detect_neutral_name_sample(pair, *in.names, lex, nullptr,
                                                  cfg.unisex_threshold);
            if (!det) continue;
            auto ctx = context_for(doc, pair.index, ContextDirection::Succeeding, cfg.context);
            if (!ctx) continue;
            b.emit(make_sample(doc, pair, type, std::move(*det), *ctx), pair.source, pair.target);
          }
        }
        break;

      case AmbiguityType::Polysemy: {
        require(in.senses, type, "senses");
        require(in.candidates, type, "candidates");
        std::vector<ParallelDocument> docs;
        for (const auto& doc : corpus)
          if (wanted(cfg, doc.lang_pair)) docs.push_back(doc);
        for (const auto& w : polysemous_words(*in.senses, cfg.polysemy))
          b.ds.sense_counts[w] = count_senses(w, *in.senses);
        for (auto& s : build_polysemy_samples(docs, *in.senses, *in.candidates, cfg.polysemy)) {
          // dedup on the corpus sentence (kept as context) and the word
          std::string en = s.context + "\x1f" + std::get<SenseId>(s.label).word;
          std::string tgt = s.target;
          b.emit(std::move(s), en, tgt);
        }
        break;
      }

      case AmbiguityType::NeutralProfession: {
        require(in.biographies, type, "biographies");
        std::vector<ParallelDocument> docs;
        std::vector<std::vector<Gender>> genders;
        std::map<std::pair<std::string, LangPair>, std::size_t> index;
        for (const auto& rec : *in.biographies) {
          if (!wanted(cfg, rec.lang_pair)) continue;
          auto key = std::make_pair(rec.document_id, rec.lang_pair);
          auto it = index.find(key);
          if (it == index.end()) {
            it = index.emplace(key, docs.size()).first;
            docs.push_back({rec.document_id, rec.lang_pair, {}});
            genders.emplace_back();
          }
          auto& d = docs[it->second];
          d.pairs.push_back({d.pairs.size(), rec.source, rec.target, rec.lang_pair});
          genders[it->second].push_back(rec.perceived_gender);
        }
        for (std::size_t di = 0; di < docs.size(); ++di) {
          const auto& doc = docs[di];
          for (const auto& pair : doc.pairs) {
            Gender g = genders[di][pair.index];
            if (g == Gender::Undetermined || count_gendered_pronouns(pair.source) == 0) continue;
            auto ctx = context_for(doc, pair.index, ContextDirection::Preceding, cfg.context);
            if (!ctx) continue;
            Detection det{mask_gendered_pronouns(pair.source), pair.target, g};
            b.emit(make_sample(doc, pair, type, std::move(det), *ctx), pair.source, pair.target);
          }
        }
        break;
      }
    }
  }
  return std::move(b.ds);
}

StatsReport dataset_stats(const Dataset& dataset, const SenseInventory* inventory) {
  StatsReport rep;
  std::map<std::pair<LangPair, AmbiguityType>, StatsRow> rows;
  std::map<std::pair<LangPair, AmbiguityType>, std::set<std::string>> words;
  for (const auto& s : dataset.samples) {
    auto& row = rows[{s.lang_pair, s.ambiguity}];
    row.lang_pair = s.lang_pair;
    row.ambiguity = s.ambiguity;
    ++row.count;
    ++row.class_counts[label_string(s.label)];
    ++rep.totals[s.lang_pair];
    ++rep.total;
    if (auto sense = std::get_if<SenseId>(&s.label)) words[{s.lang_pair, s.ambiguity}].insert(sense->word);
  }
  for (auto& [key, row] : rows) {
    for (const auto& [cls, n] : row.class_counts)
      row.class_proportions[cls] = static_cast<double>(n) / static_cast<double>(row.count);
    const auto& ws = words[key];
    if (!ws.empty()) {
      double sum = 0;
      for (const auto& w : ws) {
        auto it = dataset.sense_counts.find(w);
        if (it != dataset.sense_counts.end())
          sum += static_cast<double>(it->second);
        else if (inventory && inventory->contains(w))
          sum += static_cast<double>(count_senses(w, *inventory));
      }
      row.senses_per_word = sum / static_cast<double>(ws.size());
    }
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

json to_json(const StatsReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    json jr = {{"lang_pair", to_string(r.lang_pair)},
               {"ambiguity", to_string(r.ambiguity)},
               {"count", r.count},
               {"class_counts", r.class_counts},
               {"class_proportions", r.class_proportions}};
    if (r.ambiguity == AmbiguityType::Polysemy) jr["senses_per_word"] = r.senses_per_word;
    rows.push_back(std::move(jr));
  }
  json totals = json::object();
  for (const auto& [lp, n] : report.totals) totals[to_string(lp)] = n;
  return {{"rows", rows}, {"totals", totals}, {"total", report.total}};
}

}  // namespace icp
