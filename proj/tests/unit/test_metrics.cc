#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "fixture_util.h"
#include "icp/error.h"
#include "icp/formality.h"
#include "icp/gender.h"
#include "icp/metrics.h"
#include "icp/text.h"

namespace icp {
namespace {

using nlohmann::json;

const char* kPhrases = "aproximadamente, cerca de, alrededor de, casi, más o menos";

BleuOptions options_of(const json& c) {
  BleuOptions o;
  o.max_order = c["max_order"];
  o.smoothing = c["smoothing"] == "none" ? BleuSmoothing::None : BleuSmoothing::AddOne;
  o.tokenizer = c["tokenizer"] == "char" ? BleuTokenizer::CharLevel : BleuTokenizer::Latin13a;
  o.case_mode = c["lower"].get<bool>() ? BleuCase::Lower : BleuCase::Preserve;
  return o;
}

TEST(Metrics, BleuMatchesOracleCases) {
  auto cases = json::parse(testing::read_fixture("bleu_cases.json"));
  ASSERT_GE(cases.size(), 40u);
  for (const auto& c : cases) {
    SCOPED_TRACE(c["name"].get<std::string>());
    auto hyps = c["hyps"].get<std::vector<std::string>>();
    auto refs = c["refs"].get<std::vector<std::string>>();
    EXPECT_NEAR(corpus_bleu(hyps, refs, options_of(c)), c["expected"].get<double>(), 1e-9);
  }
  EXPECT_NEAR(corpus_bleu({"a b c d"}, {"a b c e"}), 59.46035575013605, 1e-9);
}

TEST(Metrics, BleuProperties) {
  std::mt19937 rng(17);
  const std::vector<std::string> vocab = {"el", "la", "casa", "perro", "azul,", "grande.", "y"};
  auto sentence = [&] {
    std::vector<std::string> w;
    for (int i = 0, n = 1 + rng() % 8; i < n; ++i) w.push_back(vocab[rng() % vocab.size()]);
    return join(w, " ");
  };
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> hyps, refs;
    for (int i = 0, n = 1 + rng() % 6; i < n; ++i) {
      refs.push_back(sentence());
      hyps.push_back(rng() % 3 ? sentence() : refs.back());
    }
    double b = corpus_bleu(hyps, refs);
    EXPECT_GE(b, 0);
    EXPECT_LE(b, 100);
    EXPECT_NEAR(corpus_bleu(refs, refs), 100.0, 1e-9);
    bool identical = hyps == refs;
    EXPECT_EQ(std::abs(b - 100.0) < 1e-9, identical);
    std::vector<std::size_t> order(hyps.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::string> h2, r2;
    for (auto i : order) {
      h2.push_back(hyps[i]);
      r2.push_back(refs[i]);
    }
    EXPECT_NEAR(corpus_bleu(h2, r2), b, 1e-9);
  }
  EXPECT_EQ(corpus_bleu({"", ""}, {"a", "b"}), 0.0);
  EXPECT_THROW(corpus_bleu({"a"}, {"a", "b"}), LengthMismatch);
  EXPECT_THROW(corpus_bleu({}, {}), EmptyInput);
  BleuOptions bad;
  bad.max_order = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Metrics, Tokenizers) {
  BleuOptions o;
  EXPECT_EQ(bleu_tokenize("Hola, mundo. 3.5 x-y (ok)", o),
            (std::vector<std::string>{"Hola", ",", "mundo", ".", "3.5", "x-y", "(", "ok", ")"}));
  EXPECT_EQ(bleu_tokenize("2-3", o), (std::vector<std::string>{"2", "-", "3"}));
  EXPECT_EQ(bleu_tokenize("¿Está usted?", o), (std::vector<std::string>{"¿Está", "usted", "?"}));
  o.tokenizer = BleuTokenizer::CharLevel;
  EXPECT_EQ(bleu_tokenize("彼は 学生", o), (std::vector<std::string>{"彼", "は", "学", "生"}));
  o.case_mode = BleuCase::Lower;
  EXPECT_EQ(bleu_tokenize("ÉA", o), (std::vector<std::string>{"é", "a"}));
}

TEST(Metrics, SentenceBleuAndStatsAddUp) {
  std::vector<std::string> hyps = {"el perro azul", "la casa"};
  std::vector<std::string> refs = {"el perro azul grande", "la casa"};
  BleuStats total;
  for (std::size_t i = 0; i < hyps.size(); ++i) total += bleu_stats(hyps[i], refs[i], {});
  EXPECT_NEAR(bleu_from_stats(total, {}), corpus_bleu(hyps, refs), 1e-12);
  EXPECT_NEAR(mean_sentence_bleu(hyps, refs),
              (sentence_bleu(hyps[0], refs[0]) + sentence_bleu(hyps[1], refs[1])) / 2, 1e-12);
}

TEST(Metrics, SplitPhrases) {
  auto p = split_phrases(kPhrases);
  ASSERT_EQ(p.size(), 5u);
  EXPECT_EQ(p[1].text, "cerca de");
  EXPECT_EQ(p[4].text, "más o menos");
  EXPECT_EQ(split_phrases("banco").size(), 1u);
  auto x = split_phrases(", ,x,");
  ASSERT_EQ(x.size(), 1u);
  EXPECT_EQ(x[0].text, "x");
  EXPECT_EQ(split_phrases("Cerca DE")[0].key, "cerca de");

  std::vector<std::string> texts;
  for (const auto& ph : p) texts.push_back(ph.text);
  EXPECT_EQ(join(texts, ", "), kPhrases);
}

TEST(Metrics, HitAtN) {
  EXPECT_TRUE(hit_at_n(kPhrases, "cerca de", 3));
  EXPECT_FALSE(hit_at_n(kPhrases, "casi", 3));
  EXPECT_TRUE(hit_at_n(kPhrases, "casi", 4));
  EXPECT_TRUE(hit_at_n(kPhrases, "MÁS O MENOS", 99));
  EXPECT_THROW(hit_at_n(kPhrases, "casi", 0), ConfigError);
  auto phrases = split_phrases(kPhrases);
  for (const auto& gold : {"aproximadamente", "cerca de", "alrededor de", "casi", "más o menos",
                           "nada"})
    for (std::size_t n = 1; n <= 7; ++n)
      if (hit_at_n(kPhrases, gold, n))
        for (std::size_t m = n; m <= 8; ++m) EXPECT_TRUE(hit_at_n(kPhrases, gold, m));
}

class TableScorer : public Scorer {
 public:
  explicit TableScorer(std::vector<double> v) : v_(std::move(v)) {}
  std::string id() const override { return "table"; }
  double score(std::string_view, std::string_view) override { return v_.at(i_++); }

 private:
  std::vector<double> v_;
  std::size_t i_ = 0;
};

class ThrowingScorer : public Scorer {
 public:
  std::string id() const override { return "throws"; }
  double score(std::string_view c, std::string_view) override {
    if (c == "casi") throw std::runtime_error("model crashed");
    return 1;
  }
};

TEST(Metrics, BestScoreAtN) {
  ExactMatchScorer exact;
  EXPECT_EQ(best_score_at_n(kPhrases, "cerca de", 3, exact), 100);
  EXPECT_EQ(best_score_at_n(kPhrases, "casi", 3, exact), 0);
  EXPECT_EQ(best_score_at_n("", "casi", 3, exact), 0);
  TableScorer table({10, 50, 30});
  EXPECT_EQ(best_score_at_n("a, b, c", "g", 2, table), 50);

  BleuScorer bleu;
  EXPECT_GE(best_score_at_n(kPhrases, "cerca", 10, bleu), best_score_at_n(kPhrases, "cerca", 3, bleu));

  ThrowingScorer bad;
  try {
    best_score_at_n(kPhrases, "x", 5, bad);
    FAIL();
  } catch (const ScorerFailure& e) {
    EXPECT_EQ(e.index(), 3u);
  }
  EXPECT_NO_THROW(best_score_at_n(kPhrases, "x", 3, bad));
  TableScorer nan({std::nan("")});
  EXPECT_THROW(best_score_at_n("a", "g", 1, nan), ScorerFailure);
}

TEST(Metrics, HttpScorerAgainstStub) {
  httplib::Server server;
  server.Post("/score", [](const httplib::Request& req, httplib::Response& res) {
    auto b = json::parse(req.body);
    double s = b["candidate"] == b["reference"] ? 0.9 : 0.25;
    res.set_content(json{{"score", s}}.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  HttpScorer scorer("bleurt-stub", "http://127.0.0.1:" + std::to_string(port) + "/score", 5);
  EXPECT_NEAR(best_score_at_n(kPhrases, "casi", 5, scorer), 90, 1e-9);
  EXPECT_NEAR(best_score_at_n(kPhrases, "casi", 3, scorer), 25, 1e-9);
  server.stop();
  t.join();
  EXPECT_THROW(best_score_at_n(kPhrases, "casi", 1, scorer), ScorerFailure);
  EXPECT_THROW(HttpScorer("x", "ftp://nope"), ConfigError);
}

InteractionChain chain_for(const std::string& id, const std::string& translation) {
  InteractionChain c;
  c.sample_id = id;
  c.translation = translation;
  c.status = translation.empty() ? ChainStatus::Failed : ChainStatus::Completed;
  return c;
}

std::vector<AmbiguitySample> formality_set(std::string lang) {
  std::vector<AmbiguitySample> out;
  const std::vector<std::pair<std::string, FormalityLabel>> es = {
      {"¿Usted viene con su esposa?", FormalityLabel::Formal},
      {"¿Tú vienes con tu esposa?", FormalityLabel::Informal},
      {"Gracias por su ayuda, señor.", FormalityLabel::Formal},
      {"Tú eres muy amable.", FormalityLabel::Informal},
      {"¿Está usted seguro?", FormalityLabel::Formal}};
  const std::vector<std::pair<std::string, FormalityLabel>> fr = {
      {"Vous pouvez m'aider ?", FormalityLabel::Formal},
      {"Tu es sûr ?", FormalityLabel::Informal},
      {"Merci pour votre aide.", FormalityLabel::Formal},
      {"Tu veux venir avec moi ?", FormalityLabel::Informal}};
  const auto& rows = lang == "es" ? es : fr;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    AmbiguitySample s;
    s.id = lang + "-f" + std::to_string(i);
    s.ambiguity = AmbiguityType::Formality;
    s.lang_pair = lang_pair_for_target(lang);
    s.source = "Are you sure?";
    s.target = rows[i].first;
    s.label = rows[i].second;
    out.push_back(s);
  }
  return out;
}

TEST(Metrics, FormalityAccuracy) {
  for (std::string lang : {"es", "fr"}) {
    SCOPED_TRACE(lang);
    auto data = formality_set(lang);
    std::vector<InteractionChain> copied, flipped;
    std::size_t self_consistent = 0;
    for (const auto& s : data) {
      copied.push_back(chain_for(s.id, s.target));
      if (classify_formality(s.target, lang, FormalityPolicy::Relaxed) ==
          std::get<FormalityLabel>(s.label))
        ++self_consistent;
    }
    // Swap each translation with one of the opposite class.
    for (const auto& s : data) {
      auto want = std::get<FormalityLabel>(s.label) == FormalityLabel::Formal
                      ? FormalityLabel::Informal
                      : FormalityLabel::Formal;
      auto other = std::find_if(data.begin(), data.end(), [&](const AmbiguitySample& o) {
        return std::get<FormalityLabel>(o.label) == want;
      });
      flipped.push_back(chain_for(s.id, other->target));
    }
    EXPECT_DOUBLE_EQ(formality_accuracy(copied, data, lang),
                     static_cast<double>(self_consistent) / data.size());
    EXPECT_EQ(self_consistent, data.size());
    EXPECT_DOUBLE_EQ(formality_accuracy(flipped, data, lang), 0.0);

    auto failed = copied;
    failed[0] = chain_for(data[0].id, "");
    EXPECT_DOUBLE_EQ(formality_accuracy(failed, data, lang),
                     static_cast<double>(data.size() - 1) / data.size());

    auto missing = copied;
    missing.pop_back();
    EXPECT_THROW(formality_accuracy(missing, data, lang), AlignmentError);
    auto dup = copied;
    dup.push_back(copied[0]);
    EXPECT_THROW(formality_accuracy(dup, data, lang), AlignmentError);
    auto stray = copied;
    stray.push_back(chain_for("nope", "x"));
    EXPECT_THROW(formality_accuracy(stray, data, lang), AlignmentError);
  }
  EXPECT_THROW(formality_accuracy({}, formality_set("es"), "fr"), EmptyInput);
}

TEST(Metrics, GenderAccuracyAndLmClassifier) {
  std::vector<AmbiguitySample> data;
  std::vector<InteractionChain> chains;
  const std::vector<std::tuple<std::string, std::string, Gender>> rows = {
      {"fr", "repose-le.", Gender::Masculine},
      {"fr", "Je veux que tu me la rapportes.", Gender::Feminine},
      {"es", "nos habríamos pasado el día mirándola.", Gender::Feminine},
      {"fr", "Je crains de ne pas pouvoir te l'obtenir.", Gender::Feminine}};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    AmbiguitySample s;
    s.id = "g" + std::to_string(i);
    s.ambiguity = AmbiguityType::ItResolution;
    s.lang_pair = lang_pair_for_target(std::get<0>(rows[i]));
    s.source = "Put it back.";
    s.label = std::get<2>(rows[i]);
    data.push_back(s);
    chains.push_back(chain_for(s.id, std::get<1>(rows[i])));
  }
  // The elided "l'" is Undetermined and therefore wrong.
  EXPECT_DOUBLE_EQ(gender_accuracy(chains, data, "fr", rule_gender_classifier()), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(gender_accuracy(chains, data, "es", rule_gender_classifier()), 1.0);

  EXPECT_EQ(parse_gender_answer("feminine\nE: It is 'feminine' since"), Gender::Feminine);
  EXPECT_EQ(parse_gender_answer(" 'masculine'"), Gender::Masculine);
  EXPECT_EQ(parse_gender_answer("neutral"), Gender::Undetermined);
  EXPECT_EQ(parse_gender_answer("feminine or masculine"), Gender::Undetermined);
  EXPECT_EQ(parse_gender_answer(""), Gender::Undetermined);

  BackendSpec spec;
  spec.backend_id = "lm";
  spec.script = {{ScriptRule::Match::Suffix, "F: repose-le.\nA: ", "masculine\nE: le"}};
  spec.script_default = "feminine\nE: la";
  auto lm = make_backend(spec);
  const auto& fr = builtin_templates().get("fr-gender");
  EXPECT_EQ(gender_classify_lm(*lm, fr, "Put it back.", "repose-le."), Gender::Masculine);
  EXPECT_EQ(gender_classify_lm(*lm, fr, "x", "la"), Gender::Feminine);
  EXPECT_THROW(gender_classify_lm(*lm, builtin_templates().get("es-generalist-ask"), "x", "y"),
               StageMismatch);
  GenderClassifier via_lm = [&](const AmbiguitySample& s, const std::string& t) {
    return gender_classify_lm(*lm, builtin_templates().get(target_lang(s.lang_pair) + "-gender"),
                              s.source, t);
  };
  EXPECT_DOUBLE_EQ(gender_accuracy(chains, data, "fr", via_lm), 1.0);
}

TEST(Metrics, RuleAndLmAgreementOnReplay) {
  // Record an LM that always answers with the fixture label, replay it, and
  // compare with the rule classifier: agreement must equal the rule's own
  // accuracy on the fixture.
  auto cases = json::parse(testing::read_fixture("gender_cases.json"));
  BackendSpec spec;
  spec.backend_id = "lm";
  for (const auto& c : cases)
    spec.script.push_back({ScriptRule::Match::Suffix,
                           "F: " + (c["lang"] == "es" ? to_lower(c["text"].get<std::string>())
                                                      : c["text"].get<std::string>()) +
                               "\nA: ",
                           c["label"].get<std::string>() == "undetermined"
                               ? std::string("neutral")
                               : c["label"].get<std::string>()});
  testing::TempDir dir;
  BackendSpec replay_spec;
  auto rec = record(make_backend(spec), dir / "lm.jsonl", &replay_spec);
  std::size_t n = 0, rule_right = 0;
  for (const auto& c : cases) {
    const auto& tpl = builtin_templates().get(c["lang"].get<std::string>() + "-gender");
    gender_classify_lm(*rec, tpl, "it", c["text"].get<std::string>());
  }
  auto replay = make_backend(replay_spec);
  std::size_t agree = 0;
  for (const auto& c : cases) {
    auto lang = c["lang"].get<std::string>();
    auto text = c["text"].get<std::string>();
    auto lm = gender_classify_lm(*replay, builtin_templates().get(lang + "-gender"), "it", text);
    auto rule = gender_classify_rule(text, lang);
    agree += lm == rule;
    rule_right += to_string(rule) == c["label"].get<std::string>();
    ++n;
  }
  EXPECT_EQ(agree, rule_right);
  EXPECT_GT(n, 20u);
}

TEST(Metrics, BiasReport) {
  using G = Gender;
  auto r = bias_report(std::vector<G>{G::Feminine, G::Feminine, G::Masculine, G::Masculine});
  EXPECT_DOUBLE_EQ(r.proportions["feminine"], 0.5);
  EXPECT_DOUBLE_EQ(r.proportions["masculine"], 0.5);
  r = bias_report(std::vector<G>{G::Feminine, G::Feminine, G::Feminine, G::Undetermined});
  EXPECT_DOUBLE_EQ(r.proportions["feminine"], 1.0);
  EXPECT_DOUBLE_EQ(r.undetermined_share, 0.25);
  std::vector<G> planted(600, G::Masculine);
  planted.insert(planted.end(), 400, G::Feminine);
  planted.insert(planted.end(), 37, G::Undetermined);
  std::shuffle(planted.begin(), planted.end(), std::mt19937(1));
  r = bias_report(planted);
  EXPECT_DOUBLE_EQ(r.proportions["masculine"], 0.6);
  EXPECT_DOUBLE_EQ(r.proportions["feminine"], 0.4);
  EXPECT_EQ(r.counts["undetermined"], 37u);
  EXPECT_NEAR(r.proportions["masculine"] + r.proportions["feminine"], 1.0, 1e-9);
  EXPECT_THROW(bias_report(std::vector<G>{}), EmptyInput);
  auto f = bias_report(std::vector<FormalityLabel>{FormalityLabel::Formal, FormalityLabel::Informal,
                                                   FormalityLabel::Formal});
  EXPECT_NEAR(f.proportions["formal"], 2.0 / 3.0, 1e-12);
  EXPECT_EQ(to_json(f)["total"], 3);
}

}  // namespace
}  // namespace icp
