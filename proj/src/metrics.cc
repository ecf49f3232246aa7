#include "icp/metrics.h"

#include <algorithm>
#include <cmath>
#include <regex>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include "icp/error.h"
#include "icp/formality.h"
#include "icp/gender.h"
#include "icp/text.h"

namespace icp {

using nlohmann::json;

std::string to_string(BleuTokenizer t) {
  return t == BleuTokenizer::Latin13a ? "13a" : "char";
}

std::string to_string(BleuSmoothing s) { return s == BleuSmoothing::None ? "none" : "add_one"; }

void BleuOptions::validate() const {
  if (max_order < 1) throw ConfigError("BLEU max_order must be >= 1");
}

json BleuOptions::to_json() const {
  return {{"max_order", max_order},
          {"smoothing", to_string(smoothing)},
          {"tokenizer", to_string(tokenizer)},
          {"lowercase", case_mode == BleuCase::Lower}};
}

BleuOptions BleuOptions::from_json(const json& j) {
  BleuOptions o;
  if (!j.is_object()) throw ConfigError("bleu options must be an object");
  o.max_order = j.value("max_order", 4);
  auto sm = j.value("smoothing", std::string("add_one"));
  if (sm == "none") o.smoothing = BleuSmoothing::None;
  else if (sm == "add_one") o.smoothing = BleuSmoothing::AddOne;
  else throw ConfigError("unknown BLEU smoothing '" + sm + "'");
  auto tok = j.value("tokenizer", std::string("13a"));
  if (tok == "13a") o.tokenizer = BleuTokenizer::Latin13a;
  else if (tok == "char") o.tokenizer = BleuTokenizer::CharLevel;
  else throw ConfigError("unknown BLEU tokenizer '" + tok + "'");
  o.case_mode = j.value("lowercase", false) ? BleuCase::Lower : BleuCase::Preserve;
  o.validate();
  return o;
}

namespace {

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size())
    s.replace(pos, from.size(), to);
}

std::vector<std::string> tokenize_13a(std::string line) {
  replace_all(line, "<skipped>", "");
  replace_all(line, "-\n", "");
  replace_all(line, "\n", " ");
  if (line.find('&') != std::string::npos) {
    replace_all(line, "&quot;", "\"");
    replace_all(line, "&amp;", "&");
    replace_all(line, "&lt;", "<");
    replace_all(line, "&gt;", ">");
  }
  // Byte-level patterns are safe on UTF-8: they only match ASCII, and the
  // inserted spaces never land inside a multibyte sequence.
  static const std::regex punct(R"(([\{-\~\[-\` -\&\(-\+\:-\@\/]))");
  static const std::regex period_after(R"(([^0-9])([\.,]))");
  static const std::regex period_before(R"(([\.,])([^0-9]))");
  static const std::regex dash(R"(([0-9])(-))");
  line = " " + line + " ";
  line = std::regex_replace(line, punct, " $1 ");
  line = std::regex_replace(line, period_after, "$1 $2 ");
  line = std::regex_replace(line, period_before, " $1 $2");
  line = std::regex_replace(line, dash, "$1 $2 ");
  return split_whitespace(line);
}

std::vector<std::string> tokenize_chars(std::string_view text) {
  std::vector<std::string> out;
  int32_t i = 0, n = static_cast<int32_t>(text.size());
  while (i < n) {
    int32_t start = i;
    UChar32 c;
    U8_NEXT(text.data(), i, n, c);
    if (c >= 0 && u_isUWhiteSpace(c)) continue;
    out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

std::map<std::vector<std::string>, long> ngram_counts(const std::vector<std::string>& toks,
                                                      std::size_t n) {
  std::map<std::vector<std::string>, long> out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i)
    ++out[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)];
  return out;
}

void check_aligned(std::size_t hyps, std::size_t refs) {
  if (hyps != refs)
    throw LengthMismatch(std::to_string(hyps) + " hypotheses vs " + std::to_string(refs) +
                         " references");
  if (hyps == 0) throw EmptyInput("no sentences to score");
}

}  // namespace

std::vector<std::string> bleu_tokenize(std::string_view text, const BleuOptions& opts) {
  std::string t = opts.case_mode == BleuCase::Lower ? to_lower(text) : std::string(text);
  return opts.tokenizer == BleuTokenizer::Latin13a ? tokenize_13a(std::move(t))
                                                   : tokenize_chars(t);
}

BleuStats& BleuStats::operator+=(const BleuStats& o) {
  if (matches.size() < o.matches.size()) {
    matches.resize(o.matches.size());
    totals.resize(o.totals.size());
  }
  for (std::size_t i = 0; i < o.matches.size(); ++i) {
    matches[i] += o.matches[i];
    totals[i] += o.totals[i];
  }
  hyp_len += o.hyp_len;
  ref_len += o.ref_len;
  return *this;
}

BleuStats bleu_stats(std::string_view hyp, std::string_view ref, const BleuOptions& opts) {
  opts.validate();
  auto h = bleu_tokenize(hyp, opts);
  auto r = bleu_tokenize(ref, opts);
  BleuStats s;
  s.hyp_len = static_cast<long>(h.size());
  s.ref_len = static_cast<long>(r.size());
  for (int n = 1; n <= opts.max_order; ++n) {
    auto hc = ngram_counts(h, n);
    auto rc = ngram_counts(r, n);
    long m = 0;
    for (const auto& [g, c] : hc) {
      auto it = rc.find(g);
      if (it != rc.end()) m += std::min(c, it->second);
    }
    s.matches.push_back(m);
    s.totals.push_back(std::max<long>(0, s.hyp_len - n + 1));
  }
  return s;
}

double bleu_from_stats(const BleuStats& s, const BleuOptions& opts) {
  if (s.hyp_len == 0) return 0;
  double log_p = 0;
  for (int n = 0; n < opts.max_order; ++n) {
    long m = n < static_cast<int>(s.matches.size()) ? s.matches[n] : 0;
    long t = n < static_cast<int>(s.totals.size()) ? s.totals[n] : 0;
    double p;
    if (m == 0) {
      if (opts.smoothing == BleuSmoothing::None) return 0;
      p = 1.0 / static_cast<double>(t + 1);
    } else {
      p = static_cast<double>(m) / static_cast<double>(t);
    }
    log_p += std::log(p);
  }
  double bp = std::min(0.0, 1.0 - static_cast<double>(s.ref_len) / static_cast<double>(s.hyp_len));
  return std::clamp(100.0 * std::exp(bp + log_p / opts.max_order), 0.0, 100.0);
}

double corpus_bleu(const std::vector<std::string>& hyps, const std::vector<std::string>& refs,
                   const BleuOptions& opts) {
  check_aligned(hyps.size(), refs.size());
  BleuStats total;
  for (std::size_t i = 0; i < hyps.size(); ++i) total += bleu_stats(hyps[i], refs[i], opts);
  return bleu_from_stats(total, opts);
}

double sentence_bleu(std::string_view hyp, std::string_view ref, const BleuOptions& opts) {
  return bleu_from_stats(bleu_stats(hyp, ref, opts), opts);
}

double mean_sentence_bleu(const std::vector<std::string>& hyps,
                          const std::vector<std::string>& refs, const BleuOptions& opts) {
  check_aligned(hyps.size(), refs.size());
  double sum = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) sum += sentence_bleu(hyps[i], refs[i], opts);
  return sum / static_cast<double>(hyps.size());
}

std::vector<Phrase> split_phrases(std::string_view completion) {
  std::vector<Phrase> out;
  for (const auto& piece : split(completion, ',')) {
    auto t = trim(piece);
    if (t.empty()) continue;
    out.push_back({t, fold_case(t)});
  }
  return out;
}

bool hit_at_n(std::string_view completion, std::string_view gold, std::size_t n) {
  if (n < 1) throw ConfigError("hit@n needs n >= 1");
  auto key = fold_case(trim(gold));
  auto phrases = split_phrases(completion);
  std::size_t upto = std::min(n, phrases.size());
  for (std::size_t i = 0; i < upto; ++i)
    if (phrases[i].key == key) return true;
  return false;
}

double ExactMatchScorer::score(std::string_view candidate, std::string_view reference) {
  return fold_case(trim(candidate)) == fold_case(trim(reference)) ? 100.0 : 0.0;
}

double BleuScorer::score(std::string_view candidate, std::string_view reference) {
  return sentence_bleu(candidate, reference, opts_);
}

HttpScorer::HttpScorer(std::string scorer_id, std::string endpoint, double timeout_s)
    : id_(std::move(scorer_id)), timeout_s_(timeout_s) {
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(endpoint, m, url))
    throw ConfigError("scorer endpoint '" + endpoint + "' is not an http(s) URL");
  base_ = m[1];
  path_ = m[2].matched ? std::string(m[2]) : "/";
}

double HttpScorer::score(std::string_view candidate, std::string_view reference) {
  httplib::Client cli(base_);
  auto secs = static_cast<time_t>(timeout_s_);
  cli.set_connection_timeout(secs, 0);
  cli.set_read_timeout(secs, 0);
  json body{{"candidate", candidate}, {"reference", reference}};
  auto res = cli.Post(path_, body.dump(), "application/json");
  if (!res) throw BackendUnavailable("scorer " + id_ + ": " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw BackendUnavailable("scorer " + id_ + " returned HTTP " + std::to_string(res->status));
  try {
    double v = json::parse(res->body).at("score").get<double>();
    return v >= 0 && v <= 1 ? v * 100 : v;
  } catch (const json::exception& e) {
    throw BackendUnavailable("scorer " + id_ + " sent an unreadable reply: " + e.what());
  }
}

double best_score_at_n(std::string_view completion, std::string_view gold, std::size_t n,
                       Scorer& scorer) {
  if (n < 1) throw ConfigError("score@n needs n >= 1");
  auto phrases = split_phrases(completion);
  std::size_t upto = std::min(n, phrases.size());
  double best = 0;
  for (std::size_t i = 0; i < upto; ++i) {
    double v;
    try {
      v = scorer.score(phrases[i].text, gold);
    } catch (const std::exception& e) {
      throw ScorerFailure(i, e.what());
    }
    if (!std::isfinite(v)) throw ScorerFailure(i, "non-finite score from " + scorer.id());
    best = std::max(best, v);
  }
  return best;
}

namespace {

// Chains by sample id for the samples selected by `want`; enforces a bijection.
template <typename Pred>
std::vector<std::pair<const AmbiguitySample*, const InteractionChain*>> align(
    const std::vector<InteractionChain>& chains, const std::vector<AmbiguitySample>& dataset,
    Pred want) {
  std::map<std::string_view, const AmbiguitySample*> by_id;
  for (const auto& s : dataset) by_id.emplace(s.id, &s);
  std::map<std::string_view, const InteractionChain*> chain_by_id;
  for (const auto& c : chains) {
    auto it = by_id.find(c.sample_id);
    if (it == by_id.end()) throw AlignmentError("chain for unknown sample '" + c.sample_id + "'");
    if (!want(*it->second)) continue;
    if (!chain_by_id.emplace(c.sample_id, &c).second)
      throw AlignmentError("two chains for sample '" + c.sample_id + "'");
  }
  std::vector<std::pair<const AmbiguitySample*, const InteractionChain*>> out;
  for (const auto& s : dataset) {
    if (!want(s)) continue;
    auto it = chain_by_id.find(s.id);
    if (it == chain_by_id.end()) throw AlignmentError("no chain for sample '" + s.id + "'");
    out.emplace_back(&s, it->second);
  }
  if (out.empty()) throw EmptyInput("no matching samples to score");
  return out;
}

}  // namespace

double formality_accuracy(const std::vector<InteractionChain>& chains,
                          const std::vector<AmbiguitySample>& dataset, std::string_view lang) {
  auto pairs = align(chains, dataset, [&](const AmbiguitySample& s) {
    return s.ambiguity == AmbiguityType::Formality && target_lang(s.lang_pair) == lang;
  });
  std::size_t correct = 0;
  for (auto [s, c] : pairs) {
    auto gold = std::get<FormalityLabel>(s->label);
    auto got = classify_formality(c->translation, lang, FormalityPolicy::Relaxed);
    if (got != FormalityLabel::Undetermined && got == gold) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

GenderClassifier rule_gender_classifier() {
  return [](const AmbiguitySample& s, const std::string& translation) {
    return gender_classify_rule(translation, target_lang(s.lang_pair));
  };
}

double gender_accuracy(const std::vector<InteractionChain>& chains,
                       const std::vector<AmbiguitySample>& dataset, std::string_view lang,
                       const GenderClassifier& classify) {
  auto pairs = align(chains, dataset, [&](const AmbiguitySample& s) {
    return std::holds_alternative<Gender>(s.label) && target_lang(s.lang_pair) == lang;
  });
  std::size_t correct = 0;
  for (auto [s, c] : pairs) {
    auto gold = std::get<Gender>(s->label);
    Gender got = c->translation.empty() ? Gender::Undetermined : classify(*s, c->translation);
    if (got != Gender::Undetermined && got == gold) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

Gender parse_gender_answer(std::string_view completion) {
  bool fem = false, masc = false;
  for (const auto& tok : word_tokens(extract_first_line(completion))) {
    auto f = fold_case(tok.text);
    fem |= f == "feminine";
    masc |= f == "masculine";
  }
  if (fem == masc) return Gender::Undetermined;
  return fem ? Gender::Feminine : Gender::Masculine;
}

Gender gender_classify_lm(Backend& backend, const PromptTemplate& tpl, std::string_view en_text,
                          std::string_view target_text) {
  if (tpl.stage != Stage::GenderClassify)
    throw StageMismatch("template " + tpl.id + " is not a gender classifier");
  return parse_gender_answer(backend.complete(render_gender(tpl, en_text, target_text)).text);
}

namespace {

template <typename Label>
BiasReport make_bias_report(const std::vector<Label>& labels, std::vector<Label> classes,
                            Label undetermined) {
  if (labels.empty()) throw EmptyInput("no labels for the bias report");
  BiasReport r;
  r.total = labels.size();
  for (auto c : classes) r.counts[to_string(c)] = 0;
  r.counts[to_string(undetermined)] = 0;
  for (auto l : labels) ++r.counts[to_string(l)];
  std::size_t undet = r.counts[to_string(undetermined)];
  std::size_t determined = r.total - undet;
  for (auto c : classes)
    r.proportions[to_string(c)] =
        determined ? static_cast<double>(r.counts[to_string(c)]) / determined : 0.0;
  r.undetermined_share = static_cast<double>(undet) / static_cast<double>(r.total);
  return r;
}

}  // namespace

BiasReport bias_report(const std::vector<Gender>& labels) {
  return make_bias_report(labels, {Gender::Feminine, Gender::Masculine}, Gender::Undetermined);
}

BiasReport bias_report(const std::vector<FormalityLabel>& labels) {
  return make_bias_report(labels, {FormalityLabel::Formal, FormalityLabel::Informal},
                          FormalityLabel::Undetermined);
}

json to_json(const BiasReport& r) {
  return {{"counts", r.counts},
          {"proportions", r.proportions},
          {"undetermined_share", r.undetermined_share},
          {"total", r.total}};
}

}  // namespace icp
