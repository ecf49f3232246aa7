#include <gtest/gtest.h>

#include <chrono>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "fixture_util.h"
#include "icp/error.h"
#include "icp/eval.h"
#include "icp/text.h"

namespace icp {
namespace {

using nlohmann::json;

ExperimentConfig fixture_config(const std::filesystem::path& out) {
  auto cfg = ExperimentConfig::load(testing::fixture_path("eval/experiment.json"));
  cfg.output_dir = out;
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(EvalConfig, LoadsAndResolvesPaths) {
  auto cfg = ExperimentConfig::load(testing::fixture_path("eval/experiment.json"));
  EXPECT_TRUE(cfg.dataset.is_absolute());
  EXPECT_TRUE(std::filesystem::exists(cfg.dataset));
  ASSERT_EQ(cfg.modes.size(), 2u);
  EXPECT_EQ(cfg.modes[0], ChainMode::Icp);
  EXPECT_EQ(cfg.modes[1], ChainMode::NoExtras);
  ASSERT_EQ(cfg.translators.size(), 1u);
  EXPECT_EQ(cfg.translators[0].backend_id, "scripted-mt");
  ASSERT_TRUE(cfg.user);
  EXPECT_EQ(cfg.user->kind, UserOracleSpec::Kind::Scripted);
  EXPECT_EQ(cfg.seed, 7u);
  EXPECT_EQ(cfg.metrics, (std::set<std::string>{"bleu", "f_acc", "bias"}));
}

TEST(EvalConfig, RejectsBadInput) {
  json base = json::parse(testing::read_fixture("eval/experiment.json"));
  auto with = [&](const char* key, json v) {
    json j = base;
    j[key] = std::move(v);
    return j;
  };
  EXPECT_THROW(ExperimentConfig::from_json(with("modes", {"icp", "sideways"})), ValidationError);
  EXPECT_THROW(ExperimentConfig::from_json(with("modes", json::array())), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json(with("metrics", {"meteor"})), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json(with("alpha", 1.5)), ConfigError);
  json no_user = base;
  no_user.erase("user");
  EXPECT_THROW(ExperimentConfig::from_json(no_user), ConfigError);
  no_user["modes"] = {"no_extras"};
  EXPECT_NO_THROW(ExperimentConfig::from_json(no_user));
}

TEST(EvalRun, ScriptedFixtureMatchesOracle) {
  testing::TempDir dir;
  auto report = run_experiment(fixture_config(dir.path()));
  EXPECT_EQ(report.new_chains, 8u);
  EXPECT_EQ(report.per_sample.size(), 8u);
  ASSERT_EQ(report.aggregate.size(), 2u);
  EXPECT_TRUE(report.failures.empty());

  auto expected = json::parse(testing::read_fixture("eval/expected.json"));
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& row = report.aggregate[i];
    const auto& want = expected[i];
    SCOPED_TRACE(want["mode"].get<std::string>());
    EXPECT_EQ(to_string(row.mode), want["mode"]);
    EXPECT_EQ(row.n, want["n"].get<std::size_t>());
    EXPECT_EQ(row.failed, 0u);
    ASSERT_TRUE(row.bleu && row.sentence_bleu && row.f_acc);
    EXPECT_NEAR(*row.bleu, want["bleu"].get<double>(), 1e-9);
    EXPECT_NEAR(*row.sentence_bleu, want["sentence_bleu"].get<double>(), 1e-9);
    EXPECT_DOUBLE_EQ(*row.f_acc, want["f_acc"].get<double>());
    EXPECT_FALSE(row.hit3);
    EXPECT_FALSE(row.g_acc);
    ASSERT_TRUE(row.bias);
    EXPECT_EQ(row.bias->total, 4u);
  }
  // Per-sample labels, in dataset order within each mode.
  std::map<std::string, std::vector<std::string>> labels;
  for (const auto& s : report.per_sample) {
    EXPECT_EQ(s.status, ChainStatus::Completed);
    labels[to_string(s.mode)].push_back(*s.f_label);
  }
  for (const auto& want : expected)
    EXPECT_EQ(labels[want["mode"].get<std::string>()],
              want["f_labels"].get<std::vector<std::string>>());

  EXPECT_TRUE(std::filesystem::exists(dir / "report.json"));
  auto csv = slurp(dir / "report.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_TRUE(starts_with(csv, "system,mode,lang_pair,ambiguity,n,failed,bleu"));
}

TEST(EvalRun, AggregateMeansEqualPerSampleMeans) {
  testing::TempDir dir;
  auto report = run_experiment(fixture_config(dir.path()));
  for (const auto& row : report.aggregate) {
    double bleu = 0, f = 0;
    std::size_t n = 0;
    for (const auto& s : report.per_sample)
      if (s.mode == row.mode && s.system == row.system && s.lang_pair == row.lang_pair &&
          s.ambiguity == row.ambiguity) {
        bleu += *s.bleu;
        f += *s.f_correct;
        ++n;
      }
    ASSERT_EQ(n, row.n);
    EXPECT_EQ(*row.sentence_bleu, bleu / n);
    EXPECT_EQ(*row.f_acc, f / n);
  }
}

TEST(EvalRun, InterruptedThenResumedIsByteIdentical) {
  testing::TempDir dir;
  auto cfg = fixture_config(dir / "out");
  run_experiment(cfg);
  auto uninterrupted_json = slurp(cfg.output_dir / "report.json");
  auto uninterrupted_csv = slurp(cfg.output_dir / "report.csv");
  std::filesystem::remove_all(cfg.output_dir);

  auto partial = run_experiment(cfg, RunOptions{3});
  EXPECT_EQ(partial.new_chains, 3u);
  EXPECT_EQ(partial.per_sample.size(), 3u);
  auto resumed = run_experiment(cfg);
  EXPECT_EQ(resumed.new_chains, 5u);
  EXPECT_EQ(slurp(cfg.output_dir / "report.json"), uninterrupted_json);
  EXPECT_EQ(slurp(cfg.output_dir / "report.csv"), uninterrupted_csv);

  // A third run has nothing left to do and logs no duplicates.
  EXPECT_EQ(run_experiment(cfg).new_chains, 0u);
  auto chains = read_transcript(cfg.output_dir / "transcript-scripted-mt.jsonl");
  EXPECT_EQ(chains.size(), 8u);
  std::set<std::pair<std::string, ChainMode>> keys;
  for (const auto& c : chains) EXPECT_TRUE(keys.insert({c.sample_id, c.mode}).second);
}

TEST(EvalRun, FailuresAreRecordedAndRetried) {
  testing::TempDir dir;
  auto cfg = fixture_config(dir.path());
  // Drop the no-extras reply for the first sample.
  auto& script = cfg.translators[0].script;
  script.erase(script.begin() + 2);
  auto report = run_experiment(cfg);
  EXPECT_EQ(report.per_sample.size(), 8u);
  EXPECT_EQ(report.failures.at("translate"), 1u);
  std::size_t failed = 0;
  for (const auto& r : report.aggregate) failed += r.failed;
  EXPECT_EQ(failed, 1u);
  for (const auto& s : report.per_sample)
    if (s.status == ChainStatus::Failed) {
      EXPECT_EQ(s.sample_id, "en-es-formality-e1");
      EXPECT_EQ(*s.bleu, 0.0);
      EXPECT_EQ(*s.f_correct, 0.0);
    }

  auto fixed = fixture_config(dir.path());
  auto rerun = run_experiment(fixed);
  EXPECT_EQ(rerun.new_chains, 1u);
  EXPECT_TRUE(rerun.failures.empty());
}

TEST(EvalRun, EmptyDatasetAndBadTemplates) {
  testing::TempDir dir;
  auto cfg = fixture_config(dir / "out");
  testing::write_file(dir / "empty.jsonl", "");
  cfg.dataset = dir / "empty.jsonl";
  EXPECT_THROW(run_experiment(cfg), EmptyInput);

  auto bad = fixture_config(dir / "out");
  bad.templates["es"].ask = "es-no-such-template";
  EXPECT_THROW(run_experiment(bad), UnknownTemplate);
  bad.templates["es"].ask = "es-formality-translate";
  EXPECT_THROW(run_experiment(bad), StageMismatch);
  bad.templates["es"].ask = "fr-formality-ask";
  EXPECT_THROW(run_experiment(bad), UnsupportedLanguage);
  EXPECT_FALSE(std::filesystem::exists(dir / "out"));
}

TEST(EvalReport, JsonRoundTrip) {
  testing::TempDir dir;
  auto report = run_experiment(fixture_config(dir.path()));
  auto j = to_json(report);
  auto back = report_from_json(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(aggregate_csv(back), aggregate_csv(report));
  EXPECT_THROW(report_from_json(json{{"schema", "other"}}), ConfigError);
}

TEST(EvalReport, SignificanceRowsFollowAlpha) {
  testing::TempDir dir;
  auto report = run_experiment(fixture_config(dir.path()));
  ASSERT_FALSE(report.significance.empty());
  for (const auto& s : report.significance) {
    EXPECT_EQ(s.group, "en-es/formality");
    EXPECT_EQ(s.system_a, "scripted-mt/icp");
    EXPECT_EQ(s.system_b, "scripted-mt/no_extras");
    EXPECT_EQ(s.verdict, s.p_value < s.alpha);
    EXPECT_GE(s.p_value, 0.0);
    EXPECT_LE(s.p_value, 1.0);
    EXPECT_EQ(s.resamples, 200);
  }
}

// ---------------------------------------------------------------- bootstrap

std::vector<double> gaussian(std::size_t n, double mean, std::mt19937_64& rng) {
  std::normal_distribution<double> d(mean, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

TEST(Bootstrap, IdenticalListsNeverReject) {
  std::mt19937_64 rng(3);
  auto a = gaussian(100, 0, rng);
  for (std::uint64_t seed : {0u, 1u, 2u, 99u, 12345u}) {
    auto r = paired_bootstrap(a, a, 1000, 0.05, seed);
    EXPECT_FALSE(r.verdict);
    EXPECT_EQ(r.p_value, 1.0);
  }
}

TEST(Bootstrap, UniformShiftRejects) {
  std::mt19937_64 rng(4);
  auto b = gaussian(100, 0, rng);
  auto a = b;
  for (auto& x : a) x += 10;
  auto r = paired_bootstrap(a, b, 1000, 0.05, 1);
  EXPECT_TRUE(r.verdict);
  EXPECT_EQ(r.p_value, 0.0);
  EXPECT_EQ(r.resamples, 1000);
}

TEST(Bootstrap, SymmetricAndDeterministic) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    auto a = gaussian(30, 0, rng), b = gaussian(30, 0.3, rng);
    auto ab = paired_bootstrap(a, b, 500, 0.05, trial);
    auto ba = paired_bootstrap(b, a, 500, 0.05, trial);
    EXPECT_EQ(ab.p_value, ba.p_value);
    EXPECT_EQ(ab.verdict, ba.verdict);
    EXPECT_EQ(paired_bootstrap(a, b, 500, 0.05, trial).p_value, ab.p_value);
  }
}

TEST(Bootstrap, Preconditions) {
  EXPECT_THROW(paired_bootstrap({1, 2}, {1, 2, 3}), LengthMismatch);
  EXPECT_THROW(paired_bootstrap({1}, {2}), LengthMismatch);
  EXPECT_THROW(paired_bootstrap({1, 2}, {1, 2}, 0), ConfigError);
}

// Rejection rates against the numpy re-implementation in bootstrap_oracle.py.
TEST(Bootstrap, MonteCarloRateMatchesOracle) {
  auto cases = json::parse(testing::read_fixture("bootstrap_mc.json"));
  const std::map<std::string, int> trials = {
      {"shift_0.2_n100", 4000}, {"shift_0.2_n1000", 300}, {"null_n100", 2000}};
  std::mt19937_64 rng(20240611);
  for (const auto& c : cases) {
    auto name = c["name"].get<std::string>();
    SCOPED_TRACE(name);
    int t = trials.at(name);
    auto n = c["n"].get<std::size_t>();
    double shift = c["shift"].get<double>();
    int rejections = 0;
    for (int i = 0; i < t; ++i) {
      auto a = gaussian(n, 0, rng), b = gaussian(n, shift, rng);
      rejections += paired_bootstrap(a, b, c["resamples"].get<int>(), c["alpha"].get<double>(),
                                     rng())
                        .verdict;
    }
    EXPECT_NEAR(static_cast<double>(rejections) / t, c["rejection_rate"].get<double>(), 0.03);
  }
}

TEST(Bootstrap, LargeInputRuntime) {
  std::mt19937_64 rng(6);
  auto a = gaussian(1000, 0, rng), b = gaussian(1000, 0.2, rng);
  auto start = std::chrono::steady_clock::now();
  auto r = paired_bootstrap(a, b, 1000, 0.05, 1);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(secs, 10.0);
  EXPECT_EQ(r.verdict, r.p_value < 0.05);
}

TEST(Bootstrap, BleuResamplesStatistics) {
  BleuOptions opts;
  std::vector<std::string> refs = {"the cat sat on the mat", "a dog ran in the park",
                                   "she reads a long book", "we walk to the old town"};
  std::vector<BleuStats> good, bad;
  for (const auto& r : refs) {
    good.push_back(bleu_stats(r, r, opts));
    bad.push_back(bleu_stats("completely different words here", r, opts));
  }
  EXPECT_FALSE(paired_bootstrap_bleu(good, good, opts, 500, 0.05, 1).verdict);
  auto r = paired_bootstrap_bleu(good, bad, opts, 500, 0.05, 1);
  EXPECT_TRUE(r.verdict);
  EXPECT_EQ(r.p_value, 0.0);
  EXPECT_THROW(paired_bootstrap_bleu(good, {bad[0]}, opts), LengthMismatch);
}

// ---------------------------------------------------------------- bundles

// 120 synthetic rows over 60 samples, every fourth chain Failed.
struct SyntheticReport {
  std::vector<AmbiguitySample> dataset;
  MetricReport report;

  SyntheticReport() {
    for (int i = 0; i < 60; ++i) {
      AmbiguitySample s;
      s.id = "en-es-formality-x" + std::to_string(i);
      s.ambiguity = AmbiguityType::Formality;
      s.lang_pair = LangPair::EnEs;
      s.source = "Source " + std::to_string(i);
      s.context = "Context " + std::to_string(i);
      s.target = "Objetivo " + std::to_string(i);
      s.label = FormalityLabel::Formal;
      dataset.push_back(s);
      for (auto mode : {ChainMode::Icp, ChainMode::WithContext}) {
        SampleScores r;
        r.sample_id = s.id;
        r.system = "mt";
        r.mode = mode;
        r.status = report.per_sample.size() % 4 == 3 ? ChainStatus::Failed : ChainStatus::Completed;
        r.translation = "T" + std::to_string(i);
        r.bleu = mode == ChainMode::Icp ? (i % 3) * 10.0 : 10.0;
        report.per_sample.push_back(r);
      }
    }
  }
};

TEST(Bundle, FailedPredicateExportsOnlyFailed) {
  SyntheticReport s;
  auto b = export_error_bundle(s.report, s.dataset, failed_chains(), std::nullopt);
  EXPECT_EQ(b.entries.size(), 30u);
  for (const auto& e : b.entries) {
    EXPECT_EQ(e.status, "failed");
    EXPECT_FALSE(e.error_type);
    EXPECT_TRUE(starts_with(e.query, "Source "));
    EXPECT_TRUE(starts_with(e.context, "Context "));
  }
}

TEST(Bundle, SeededSampleIsReproducible) {
  SyntheticReport s;
  auto all = parse_bundle_predicate("all");
  auto a = export_error_bundle(s.report, s.dataset, all, 50, 11);
  auto b = export_error_bundle(s.report, s.dataset, all, 50, 11);
  auto c = export_error_bundle(s.report, s.dataset, all, 50, 12);
  ASSERT_EQ(a.entries.size(), 50u);
  EXPECT_EQ(bundle_to_jsonl(a), bundle_to_jsonl(b));
  EXPECT_NE(bundle_to_jsonl(a), bundle_to_jsonl(c));
  std::set<std::string> ids;
  std::vector<std::size_t> order;
  for (const auto& e : a.entries) {
    EXPECT_TRUE(ids.insert(e.chain_id).second);
    for (std::size_t i = 0; i < s.report.per_sample.size(); ++i) {
      const auto& r = s.report.per_sample[i];
      if (r.system + ":" + to_string(r.mode) + ":" + r.sample_id == e.chain_id) order.push_back(i);
    }
  }
  EXPECT_TRUE(std::is_sorted(order.begin(), order.end()));
}

TEST(Bundle, IcpNotBetterComparesAgainstBaseline) {
  SyntheticReport s;
  auto b = export_error_bundle(s.report, s.dataset, parse_bundle_predicate("icp_not_better:bleu"),
                               std::nullopt);
  // Icp BLEU cycles 0, 10, 20 against a constant 10.
  EXPECT_EQ(b.entries.size(), 40u);
  for (const auto& e : b.entries) EXPECT_EQ(e.mode, ChainMode::Icp);
  EXPECT_THROW(parse_bundle_predicate("icp_not_better:rouge"), ConfigError);
  EXPECT_THROW(parse_bundle_predicate("icp_not_better:bleu:icp"), ConfigError);
  EXPECT_THROW(parse_bundle_predicate("sometimes"), ConfigError);
}

TEST(Bundle, VocabularyIsExactlyFive) {
  std::vector<std::string> names;
  for (auto t : error_types()) names.push_back(to_string(t));
  EXPECT_EQ(names, (std::vector<std::string>{"WrongQuestion", "WrongAnswer", "ManyAmbiguities",
                                             "LimitedContext", "StyleOrOther"}));
  for (const auto& n : names) EXPECT_EQ(to_string(parse_error_type(n)), n);
  EXPECT_THROW(parse_error_type("Hallucination"), UnknownErrorType);
}

TEST(Bundle, AnnotateThenReadBack) {
  testing::TempDir dir;
  SyntheticReport s;
  auto b = export_error_bundle(s.report, s.dataset, failed_chains(), 5, 1);
  auto id = b.entries[2].chain_id;
  annotate_error(b, id, "WrongAnswer", "ann1", "2024-05-01T10:00:00Z");
  annotate_error(b, id, "LimitedContext", "ann2");
  write_bundle(dir / "bundle.jsonl", b);
  auto back = read_bundle(dir / "bundle.jsonl");
  ASSERT_EQ(back.entries.size(), 5u);
  const auto& e = back.entries[2];
  EXPECT_EQ(e.chain_id, id);
  ASSERT_TRUE(e.error_type);
  EXPECT_EQ(*e.error_type, ErrorType::LimitedContext);
  ASSERT_EQ(e.history.size(), 2u);
  EXPECT_EQ(e.history[0].type, ErrorType::WrongAnswer);
  EXPECT_EQ(e.history[0].annotator, "ann1");
  EXPECT_EQ(e.history[1].annotator, "ann2");
  EXPECT_EQ(e.history[1].at.size(), 20u);  // YYYY-MM-DDTHH:MM:SSZ
  EXPECT_EQ(bundle_to_jsonl(back), bundle_to_jsonl(b));

  EXPECT_THROW(annotate_error(b, id, "Typo", "ann1"), UnknownErrorType);
  EXPECT_THROW(annotate_error(b, "mt:icp:nope", "WrongAnswer", "ann1"), UnknownChain);
  EXPECT_THROW(bundle_from_jsonl("{\"chain_id\":\"a\"}\nnot json\n"), FormatError);
}

TEST(Bundle, DistributionMatchesHandCount) {
  auto b = read_bundle(testing::fixture_path("eval/bundle10.jsonl"));
  ASSERT_EQ(b.entries.size(), 10u);
  std::map<std::string, std::size_t> want = {{"WrongQuestion", 3}, {"WrongAnswer", 2},
                                             {"ManyAmbiguities", 1}, {"LimitedContext", 2},
                                             {"StyleOrOther", 1}, {"unannotated", 1}};
  EXPECT_EQ(error_distribution(b), want);
}

}  // namespace
}  // namespace icp
