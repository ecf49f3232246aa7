#include "icp/eval.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <mutex>
#include <random>
#include <thread>

#include "icp/error.h"
#include "icp/formality.h"
#include "icp/gender.h"
#include "icp/lexicon.h"
#include "icp/prompt.h"
#include "icp/text.h"

namespace icp {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::set<std::string> kMetrics = {"bleu", "hit", "score", "f_acc", "g_acc", "bias"};

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

UserOracleSpec user_from_json(const json& j) {
  UserOracleSpec u;
  auto kind = j.value("kind", std::string("lm"));
  if (kind == "lm") {
    u.kind = UserOracleSpec::Kind::Lm;
    u.backend = BackendSpec::from_json(j.at("backend"));
    u.template_id = j.value("template", "");
  } else if (kind == "scripted") {
    u.kind = UserOracleSpec::Kind::Scripted;
    u.answers = j.value("answers", std::map<std::string, std::string>{});
    if (j.contains("default")) u.fallback = j.at("default").get<std::string>();
    if (u.answers.empty() && !u.fallback)
      throw ConfigError("scripted user needs answers or a default");
  } else {
    throw ConfigError("user kind must be lm or scripted, got '" + kind + "'");
  }
  return u;
}

json user_to_json(const UserOracleSpec& u) {
  if (u.kind == UserOracleSpec::Kind::Scripted) {
    json j{{"kind", "scripted"}, {"answers", u.answers}};
    if (u.fallback) j["default"] = *u.fallback;
    return j;
  }
  return {{"kind", "lm"}, {"backend", u.backend.to_json()}, {"template", u.template_id}};
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  try {
    ExperimentConfig c;
    c.dataset = resolve(base_dir, j.at("dataset").get<std::string>());
    for (const auto& m : j.at("modes")) {
      auto mode = parse_chain_mode(m.get<std::string>());
      if (std::find(c.modes.begin(), c.modes.end(), mode) != c.modes.end())
        throw ConfigError("mode listed twice: " + m.get<std::string>());
      c.modes.push_back(mode);
    }
    if (c.modes.empty()) throw ConfigError("no modes configured");

    if (j.contains("translator")) c.translators.push_back(BackendSpec::from_json(j["translator"]));
    const json translators = j.value("translators", json::array());
    for (const auto& t : translators)
      c.translators.push_back(BackendSpec::from_json(t));
    if (c.translators.empty()) throw ConfigError("no translator backend configured");
    std::set<std::string> ids;
    for (auto& t : c.translators) {
      if (!ids.insert(t.backend_id).second) throw DuplicateId("translator " + t.backend_id);
      if (t.kind == BackendKind::HumanPending)
        throw ConfigError("a human backend cannot translate in a batch experiment");
      if (t.kind == BackendKind::Replay)
        t.cache_path = resolve(base_dir, t.cache_path).string();
    }

    if (j.contains("user")) c.user = user_from_json(j["user"]);
    if (c.user && c.user->kind == UserOracleSpec::Kind::Lm &&
        c.user->backend.kind == BackendKind::Replay)
      c.user->backend.cache_path = resolve(base_dir, c.user->backend.cache_path).string();
    if (!c.user && std::find(c.modes.begin(), c.modes.end(), ChainMode::Icp) != c.modes.end())
      throw ConfigError("icp mode needs a user oracle");

    const json templates = j.value("templates", json::object());
    for (const auto& [lang, t] : templates.items()) {
      LangTemplates lt;
      lt.ask = t.value("ask", "");
      lt.translate = t.value("translate", "");
      lt.with_context = t.value("with_context", "");
      lt.no_extras = t.value("no_extras", "");
      c.templates[lang] = lt;
    }
    c.template_dir = resolve(base_dir, j.value("template_dir", ""));
    if (j.contains("metrics")) {
      c.metrics.clear();
      for (const auto& m : j["metrics"]) {
        auto name = m.get<std::string>();
        if (!kMetrics.count(name)) throw ConfigError("unknown metric '" + name + "'");
        c.metrics.insert(name);
      }
    }
    if (j.contains("bleu")) c.bleu = BleuOptions::from_json(j["bleu"]);
    if (j.contains("scorer")) {
      const auto& s = j["scorer"];
      c.scorer.kind = s.value("kind", "exact");
      c.scorer.endpoint = s.value("endpoint", "");
      c.scorer.timeout_s = s.value("timeout_s", 30.0);
      if (c.scorer.kind != "exact" && c.scorer.kind != "bleu" && c.scorer.kind != "http")
        throw ConfigError("unknown scorer kind '" + c.scorer.kind + "'");
      if (c.scorer.kind == "http" && c.scorer.endpoint.empty())
        throw ConfigError("http scorer needs an endpoint");
    }
    if (j.contains("gender_lm")) c.gender_lm = BackendSpec::from_json(j["gender_lm"]);
    c.seed = j.value("seed", std::uint64_t{1});
    c.resamples = j.value("resamples", 1000);
    c.alpha = j.value("alpha", 0.05);
    c.parallelism = j.value("parallelism", std::size_t{4});
    if (c.resamples < 1) throw ConfigError("resamples must be >= 1");
    if (!(c.alpha > 0 && c.alpha < 1)) throw ConfigError("alpha must be in (0, 1)");
    if (c.parallelism < 1) throw ConfigError("parallelism must be >= 1");
    c.output_dir = resolve(base_dir, j.value("output_dir", std::string("eval-out")));
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

json ExperimentConfig::to_json() const {
  json modes_j = json::array();
  for (auto m : modes) modes_j.push_back(icp::to_string(m));
  json tr = json::array();
  for (const auto& t : translators) tr.push_back(t.to_json());
  json tpl = json::object();
  for (const auto& [lang, t] : templates)
    tpl[lang] = {{"ask", t.ask},
                 {"translate", t.translate},
                 {"with_context", t.with_context},
                 {"no_extras", t.no_extras}};
  json j{{"dataset", dataset.string()},
         {"modes", modes_j},
         {"translators", tr},
         {"templates", tpl},
         {"template_dir", template_dir.string()},
         {"metrics", metrics},
         {"bleu", bleu.to_json()},
         {"scorer", {{"kind", scorer.kind}, {"endpoint", scorer.endpoint}}},
         {"seed", seed},
         {"resamples", resamples},
         {"alpha", alpha},
         {"parallelism", parallelism},
         {"output_dir", output_dir.string()}};
  if (user) j["user"] = user_to_json(*user);
  if (gender_lm) j["gender_lm"] = gender_lm->to_json();
  return j;
}

// ---------------------------------------------------------------- bootstrap

namespace {

// Draws `resamples` index vectors from one seeded stream; `stat` returns the
// two system statistics for a resample.
template <typename Stat>
SignificanceResult bootstrap(std::size_t n, int resamples, double alpha, std::uint64_t seed,
                             Stat stat) {
  if (resamples < 1) throw ConfigError("resamples must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(n);
  long le = 0, ge = 0;
  for (int r = 0; r < resamples; ++r) {
    for (auto& i : idx) i = static_cast<std::size_t>(rng() % n);
    auto [a, b] = stat(idx);
    le += a <= b;
    ge += a >= b;
  }
  SignificanceResult res;
  double tail = static_cast<double>(std::min(le, ge)) / resamples;
  res.p_value = std::min(1.0, 2 * tail);
  res.resamples = resamples;
  res.alpha = alpha;
  res.verdict = res.p_value < alpha;
  return res;
}

}  // namespace

SignificanceResult paired_bootstrap(const std::vector<double>& a, const std::vector<double>& b,
                                    int resamples, double alpha, std::uint64_t seed) {
  if (a.size() != b.size()) throw LengthMismatch("paired lists differ in length");
  if (a.size() < 2) throw LengthMismatch("paired bootstrap needs at least 2 samples");
  return bootstrap(a.size(), resamples, alpha, seed, [&](const std::vector<std::size_t>& idx) {
    double sa = 0, sb = 0;
    for (auto i : idx) {
      sa += a[i];
      sb += b[i];
    }
    // Equal sample counts, so comparing sums compares means exactly.
    return std::pair{sa, sb};
  });
}

SignificanceResult paired_bootstrap_bleu(const std::vector<BleuStats>& a,
                                         const std::vector<BleuStats>& b, const BleuOptions& opts,
                                         int resamples, double alpha, std::uint64_t seed) {
  if (a.size() != b.size()) throw LengthMismatch("paired lists differ in length");
  if (a.size() < 2) throw LengthMismatch("paired bootstrap needs at least 2 samples");
  return bootstrap(a.size(), resamples, alpha, seed, [&](const std::vector<std::size_t>& idx) {
    BleuStats sa, sb;
    for (auto i : idx) {
      sa += a[i];
      sb += b[i];
    }
    return std::pair{bleu_from_stats(sa, opts), bleu_from_stats(sb, opts)};
  });
}

// ---------------------------------------------------------------- scoring

namespace {

struct Resolved {
  std::string ask, translate, baseline_ctx, baseline_none, user;
};

const TemplateRegistry& registry_for(const ExperimentConfig& cfg, TemplateRegistry& storage) {
  if (cfg.template_dir.empty()) return builtin_templates();
  storage = builtin_with_overrides(cfg.template_dir);
  return storage;
}

Resolved resolve_templates(const ExperimentConfig& cfg, const AmbiguitySample& s) {
  auto lang = target_lang(s.lang_pair);
  auto defaults = default_chain_templates(lang, s.ambiguity);
  Resolved r{defaults.ask_id, defaults.translate_id,
             default_baseline_template(lang, s.ambiguity, ChainMode::WithContext),
             default_baseline_template(lang, s.ambiguity, ChainMode::NoExtras),
             default_user_template(s.ambiguity)};
  if (auto it = cfg.templates.find(lang); it != cfg.templates.end()) {
    if (!it->second.ask.empty()) r.ask = it->second.ask;
    if (!it->second.translate.empty()) r.translate = it->second.translate;
    if (!it->second.with_context.empty()) r.baseline_ctx = it->second.with_context;
    if (!it->second.no_extras.empty()) r.baseline_none = it->second.no_extras;
  }
  if (cfg.user && cfg.user->kind == UserOracleSpec::Kind::Lm && !cfg.user->template_id.empty())
    r.user = cfg.user->template_id;
  return r;
}

void check_template(const TemplateRegistry& reg, const std::string& id, Stage stage,
                    const std::string& lang) {
  const auto& t = reg.get(id);  // UnknownTemplate
  if (t.stage != stage)
    throw StageMismatch("template " + id + " is " + to_string(t.stage) + ", need " +
                        to_string(stage));
  if (!t.matches_lang(lang)) throw UnsupportedLanguage("template " + id + " does not serve " + lang);
}

bool wants(const ExperimentConfig& cfg, const char* metric) { return cfg.metrics.count(metric) > 0; }

std::unique_ptr<Scorer> make_scorer(const ScorerSpec& s, const BleuOptions& bleu) {
  if (s.kind == "bleu") return std::make_unique<BleuScorer>(bleu);
  if (s.kind == "http") return std::make_unique<HttpScorer>("http", s.endpoint, s.timeout_s);
  return std::make_unique<ExactMatchScorer>();
}

struct Scoring {
  const ExperimentConfig& cfg;
  const TemplateRegistry& reg;
  Scorer& scorer;
  Backend* gender_lm;
  std::map<std::string, std::size_t>& failures;

  SampleScores score(const std::string& system, const AmbiguitySample& s,
                     const InteractionChain& c) {
    SampleScores r;
    r.sample_id = s.id;
    r.system = system;
    r.mode = c.mode;
    r.lang_pair = s.lang_pair;
    r.ambiguity = s.ambiguity;
    r.status = c.status;
    r.failed_stage = c.failed_stage;
    r.question = c.question;
    r.answer = c.answer;
    r.translation = c.translation;
    auto lang = target_lang(s.lang_pair);
    const std::string& out = c.translation;

    if (s.ambiguity == AmbiguityType::Polysemy) {
      if (wants(cfg, "hit")) {
        r.hit3 = hit_at_n(out, s.target, 3) ? 1.0 : 0.0;
        r.hit10 = hit_at_n(out, s.target, 10) ? 1.0 : 0.0;
      }
      if (wants(cfg, "score")) {
        try {
          r.b3 = best_score_at_n(out, s.target, 3, scorer);
          r.b10 = best_score_at_n(out, s.target, 10, scorer);
        } catch (const ScorerFailure&) {
          r.b3.reset();
          r.b10.reset();
          ++failures["scorer"];
        }
      }
      return r;
    }
    if (wants(cfg, "bleu")) r.bleu = sentence_bleu(out, s.target, cfg.bleu);
    bool labels = wants(cfg, "bias");
    if (auto gold = std::get_if<FormalityLabel>(&s.label); gold && (wants(cfg, "f_acc") || labels)) {
      auto got = out.empty() ? FormalityLabel::Undetermined
                             : classify_formality(out, lang, FormalityPolicy::Relaxed);
      r.f_label = to_string(got);
      if (wants(cfg, "f_acc"))
        r.f_correct = got != FormalityLabel::Undetermined && got == *gold ? 1.0 : 0.0;
    }
    if (auto gold = std::get_if<Gender>(&s.label); gold && (wants(cfg, "g_acc") || labels)) {
      Gender got = Gender::Undetermined;
      if (!out.empty()) {
        if (gender_lm) {
          try {
            got = gender_classify_lm(*gender_lm, reg.get(lang + "-gender"), s.source, out);
          } catch (const RuntimeFailure&) {
            ++failures["gender_lm"];
          }
        } else {
          got = gender_classify_rule(out, lang);
        }
      }
      r.g_label = to_string(got);
      if (wants(cfg, "g_acc"))
        r.g_correct = got != Gender::Undetermined && got == *gold ? 1.0 : 0.0;
    }
    return r;
  }
};

template <typename Get>
std::optional<double> mean_of(const std::vector<const SampleScores*>& rows, Get get) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto* r : rows)
    if (auto v = get(*r)) {
      sum += *v;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::string group_key(LangPair lp, AmbiguityType a) { return to_string(lp) + "/" + to_string(a); }

std::string system_name(const std::string& backend, ChainMode m) {
  return backend + "/" + to_string(m);
}

}  // namespace

MetricReport build_report(const ExperimentConfig& cfg, const std::vector<AmbiguitySample>& dataset,
                          const std::map<std::string, std::vector<InteractionChain>>& chains) {
  MetricReport report;
  report.config = cfg.to_json();
  TemplateRegistry storage;
  const auto& reg = registry_for(cfg, storage);
  auto scorer = make_scorer(cfg.scorer, cfg.bleu);
  std::unique_ptr<Backend> gender_lm;
  if (cfg.gender_lm && wants(cfg, "g_acc")) gender_lm = make_backend(*cfg.gender_lm);
  Scoring scoring{cfg, reg, *scorer, gender_lm.get(), report.failures};

  std::map<std::string, const AmbiguitySample*> by_id;
  for (const auto& s : dataset) by_id.emplace(s.id, &s);

  // Rows in (translator, sample, mode) config order; the last chain logged for a key wins.
  for (const auto& t : cfg.translators) {
    auto it = chains.find(t.backend_id);
    if (it == chains.end()) continue;
    std::map<std::pair<std::string, ChainMode>, const InteractionChain*> latest;
    for (const auto& c : it->second) {
      if (!by_id.count(c.sample_id))
        throw AlignmentError("transcript has a chain for unknown sample '" + c.sample_id + "'");
      latest[{c.sample_id, c.mode}] = &c;
    }
    for (const auto& s : dataset)
      for (auto m : cfg.modes) {
        auto c = latest.find({s.id, m});
        if (c == latest.end()) continue;
        report.per_sample.push_back(scoring.score(t.backend_id, s, *c->second));
        if (c->second->status == ChainStatus::Failed)
          ++report.failures[c->second->failed_stage ? to_string(*c->second->failed_stage)
                                                    : std::string("unknown")];
      }
  }

  // Aggregates per (system, mode, lang_pair, ambiguity), in first-seen order.
  std::vector<std::tuple<std::string, ChainMode, LangPair, AmbiguityType>> keys;
  std::map<std::tuple<std::string, ChainMode, LangPair, AmbiguityType>,
           std::vector<const SampleScores*>>
      groups;
  for (const auto& r : report.per_sample) {
    auto key = std::make_tuple(r.system, r.mode, r.lang_pair, r.ambiguity);
    auto& g = groups[key];
    if (g.empty()) keys.push_back(key);
    g.push_back(&r);
  }
  auto cmp = [&](const auto& a, const auto& b) {
    auto ta = std::make_tuple(std::get<2>(a), std::get<3>(a), std::get<0>(a), std::get<1>(a));
    auto tb = std::make_tuple(std::get<2>(b), std::get<3>(b), std::get<0>(b), std::get<1>(b));
    return ta < tb;
  };
  std::stable_sort(keys.begin(), keys.end(), cmp);

  for (const auto& key : keys) {
    const auto& rows = groups[key];
    AggregateRow a;
    std::tie(a.system, a.mode, a.lang_pair, a.ambiguity) = key;
    a.n = rows.size();
    for (const auto* r : rows) a.failed += r->status == ChainStatus::Failed;
    a.sentence_bleu = mean_of(rows, [](const SampleScores& r) { return r.bleu; });
    if (a.sentence_bleu) {
      std::vector<std::string> hyps, refs;
      for (const auto* r : rows) {
        hyps.push_back(r->translation);
        refs.push_back(by_id.at(r->sample_id)->target);
      }
      a.bleu = corpus_bleu(hyps, refs, cfg.bleu);
    }
    a.hit3 = mean_of(rows, [](const SampleScores& r) { return r.hit3; });
    a.hit10 = mean_of(rows, [](const SampleScores& r) { return r.hit10; });
    a.b3 = mean_of(rows, [](const SampleScores& r) { return r.b3; });
    a.b10 = mean_of(rows, [](const SampleScores& r) { return r.b10; });
    a.f_acc = mean_of(rows, [](const SampleScores& r) { return r.f_correct; });
    a.g_acc = mean_of(rows, [](const SampleScores& r) { return r.g_correct; });
    if (wants(cfg, "bias")) {
      std::vector<Gender> g;
      std::vector<FormalityLabel> f;
      for (const auto* r : rows) {
        if (r->g_label) g.push_back(*parse_gender(*r->g_label));
        if (r->f_label) f.push_back(*parse_formality(*r->f_label));
      }
      if (!g.empty()) a.bias = bias_report(g);
      else if (!f.empty()) a.bias = bias_report(f);
    }
    report.aggregate.push_back(std::move(a));
  }

  // Pairwise significance between systems within each (lang_pair, ambiguity).
  std::vector<std::string> systems;
  for (const auto& t : cfg.translators)
    for (auto m : cfg.modes) systems.push_back(system_name(t.backend_id, m));
  std::map<std::string, std::map<std::string, std::map<std::string, const SampleScores*>>> table;
  std::vector<std::string> group_order;
  for (const auto& r : report.per_sample) {
    auto g = group_key(r.lang_pair, r.ambiguity);
    if (!table.count(g)) group_order.push_back(g);
    table[g][system_name(r.system, r.mode)][r.sample_id] = &r;
  }
  std::sort(group_order.begin(), group_order.end());
  for (const auto& g : group_order) {
    const auto& sys = table[g];
    for (std::size_t i = 0; i < systems.size(); ++i)
      for (std::size_t k = i + 1; k < systems.size(); ++k) {
        auto ia = sys.find(systems[i]), ib = sys.find(systems[k]);
        if (ia == sys.end() || ib == sys.end()) continue;
        std::vector<std::pair<const SampleScores*, const SampleScores*>> paired;
        for (const auto& s : dataset) {
          auto pa = ia->second.find(s.id), pb = ib->second.find(s.id);
          if (pa != ia->second.end() && pb != ib->second.end())
            paired.emplace_back(pa->second, pb->second);
        }
        if (paired.size() < 2) continue;
        auto add = [&](SignificanceResult r, const std::string& metric) {
          r.system_a = systems[i];
          r.system_b = systems[k];
          r.metric = metric;
          r.group = g;
          report.significance.push_back(std::move(r));
        };
        if (paired.front().first->bleu && paired.front().second->bleu) {
          std::vector<BleuStats> sa, sb;
          for (auto [x, y] : paired) {
            const auto& ref = by_id.at(x->sample_id)->target;
            sa.push_back(bleu_stats(x->translation, ref, cfg.bleu));
            sb.push_back(bleu_stats(y->translation, ref, cfg.bleu));
          }
          add(paired_bootstrap_bleu(sa, sb, cfg.bleu, cfg.resamples, cfg.alpha, cfg.seed), "bleu");
        }
        auto per_sample = [&](const char* metric, auto get) {
          std::vector<double> va, vb;
          for (auto [x, y] : paired) {
            auto a = get(*x), b = get(*y);
            if (!a || !b) return;
            va.push_back(*a);
            vb.push_back(*b);
          }
          add(paired_bootstrap(va, vb, cfg.resamples, cfg.alpha, cfg.seed), metric);
        };
        per_sample("hit3", [](const SampleScores& r) { return r.hit3; });
        per_sample("b3", [](const SampleScores& r) { return r.b3; });
        per_sample("f_acc", [](const SampleScores& r) { return r.f_correct; });
        per_sample("g_acc", [](const SampleScores& r) { return r.g_correct; });
      }
  }
  return report;
}

// ---------------------------------------------------------------- running

namespace {

fs::path transcript_path(const ExperimentConfig& cfg, const std::string& backend_id) {
  return cfg.output_dir / ("transcript-" + backend_id + ".jsonl");
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

MetricReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  auto dataset = read_dataset(cfg.dataset);
  if (dataset.empty()) throw EmptyInput("dataset " + cfg.dataset.string() + " has no samples");
  {
    std::set<std::string> ids;
    for (const auto& s : dataset)
      if (!ids.insert(s.id).second) throw DuplicateId("sample " + s.id);
  }
  TemplateRegistry storage;
  const auto& reg = registry_for(cfg, storage);

  // Resolve every template up front so a bad config fails before any call.
  std::vector<Resolved> resolved;
  for (const auto& s : dataset) {
    auto r = resolve_templates(cfg, s);
    auto lang = target_lang(s.lang_pair);
    for (auto m : cfg.modes) {
      if (m == ChainMode::Icp) {
        check_template(reg, r.ask, Stage::Ask, lang);
        check_template(reg, r.translate, Stage::Translate, lang);
        if (cfg.user->kind == UserOracleSpec::Kind::Lm)
          check_template(reg, r.user, Stage::UserAnswer, lang);
      } else if (m == ChainMode::WithContext) {
        check_template(reg, r.baseline_ctx, Stage::BaselineContext, lang);
      } else {
        check_template(reg, r.baseline_none, Stage::BaselineNoExtras, lang);
      }
    }
    resolved.push_back(std::move(r));
  }

  fs::create_directories(cfg.output_dir);
  std::map<std::string, std::vector<InteractionChain>> logged;
  std::map<std::string, std::unique_ptr<Backend>> translators;
  for (const auto& t : cfg.translators) {
    logged[t.backend_id] = read_transcript(transcript_path(cfg, t.backend_id));
    translators[t.backend_id] = make_backend(t);
  }

  std::shared_ptr<Backend> user_backend;
  std::unique_ptr<ScriptedUserOracle> scripted_user;
  if (cfg.user) {
    if (cfg.user->kind == UserOracleSpec::Kind::Lm)
      user_backend = make_backend(cfg.user->backend);
    else
      scripted_user = std::make_unique<ScriptedUserOracle>(cfg.user->answers, cfg.user->fallback);
  }

  struct Task {
    const BackendSpec* translator;
    std::size_t sample;
    ChainMode mode;
  };
  std::vector<Task> tasks;
  for (const auto& t : cfg.translators) {
    std::set<std::pair<std::string, ChainMode>> done;
    for (const auto& c : logged[t.backend_id])
      if (c.completed()) done.insert({c.sample_id, c.mode});
      else done.erase({c.sample_id, c.mode});
    for (std::size_t i = 0; i < dataset.size(); ++i)
      for (auto m : cfg.modes)
        if (!done.count({dataset[i].id, m})) tasks.push_back({&t, i, m});
  }
  std::size_t budget = std::min(tasks.size(), opts.max_new_chains.value_or(tasks.size()));

  std::mutex log_mu;
  std::atomic<std::size_t> next{0};
  auto run_task = [&](const Task& task) {
    const auto& s = dataset[task.sample];
    const auto& r = resolved[task.sample];
    Backend& backend = *translators.at(task.translator->backend_id);
    InteractionChain chain;
    try {
      if (task.mode == ChainMode::Icp) {
        std::unique_ptr<LmUserOracle> lm_user;
        UserOracle* user = scripted_user.get();
        if (!user) {
          lm_user = std::make_unique<LmUserOracle>(user_backend, reg.get(r.user));
          user = lm_user.get();
        }
        chain = run_icp(backend, *user, reg.get(r.ask), reg.get(r.translate), s);
      } else {
        const auto& id = task.mode == ChainMode::WithContext ? r.baseline_ctx : r.baseline_none;
        chain = run_baseline(backend, reg.get(id), s, task.mode);
      }
    } catch (const Error& e) {
      chain = InteractionChain{};
      chain.sample_id = s.id;
      chain.mode = task.mode;
      chain.status = ChainStatus::Failed;
      chain.failed_stage = task.mode == ChainMode::Icp ? ChainStage::Ask : ChainStage::Translate;
      chain.failure_reason = e.what();
    }
    std::lock_guard lock(log_mu);
    append_transcript(transcript_path(cfg, task.translator->backend_id), chain);
    logged[task.translator->backend_id].push_back(std::move(chain));
  };

  std::vector<std::thread> workers;
  std::exception_ptr worker_error;
  std::mutex err_mu;
  std::size_t n_workers = std::min(cfg.parallelism, std::max<std::size_t>(budget, 1));
  for (std::size_t w = 0; w < n_workers; ++w)
    workers.emplace_back([&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= budget) return;
        try {
          run_task(tasks[i]);
        } catch (...) {
          std::lock_guard lock(err_mu);
          if (!worker_error) worker_error = std::current_exception();
          next = budget;
          return;
        }
      }
    });
  for (auto& w : workers) w.join();
  if (worker_error) std::rethrow_exception(worker_error);

  auto report = build_report(cfg, dataset, logged);
  report.new_chains = budget;

  std::ofstream rj(cfg.output_dir / "report.json", std::ios::binary);
  rj << to_json(report).dump(1) << "\n";
  std::ofstream rc(cfg.output_dir / "report.csv", std::ios::binary);
  rc << aggregate_csv(report);
  if (!rj || !rc) throw IoError("cannot write report files in " + cfg.output_dir.string());
  return report;
}

// ---------------------------------------------------------------- serialization

namespace {

template <typename T>
void put(json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

template <typename T>
std::optional<T> take(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<T>();
}

}  // namespace

json to_json(const MetricReport& r) {
  json rows = json::array();
  for (const auto& s : r.per_sample) {
    json j{{"id", s.sample_id},
           {"system", s.system},
           {"mode", to_string(s.mode)},
           {"lang_pair", to_string(s.lang_pair)},
           {"ambiguity", to_string(s.ambiguity)},
           {"status", to_string(s.status)},
           {"question", s.question},
           {"answer", s.answer},
           {"translation", s.translation}};
    if (s.failed_stage) j["failed_stage"] = to_string(*s.failed_stage);
    put(j, "bleu", s.bleu);
    put(j, "hit3", s.hit3);
    put(j, "hit10", s.hit10);
    put(j, "b3", s.b3);
    put(j, "b10", s.b10);
    put(j, "f_label", s.f_label);
    put(j, "g_label", s.g_label);
    put(j, "f_correct", s.f_correct);
    put(j, "g_correct", s.g_correct);
    rows.push_back(std::move(j));
  }
  json agg = json::array();
  for (const auto& a : r.aggregate) {
    json j{{"system", a.system},
           {"mode", to_string(a.mode)},
           {"lang_pair", to_string(a.lang_pair)},
           {"ambiguity", to_string(a.ambiguity)},
           {"n", a.n},
           {"failed", a.failed}};
    put(j, "bleu", a.bleu);
    put(j, "sentence_bleu", a.sentence_bleu);
    put(j, "hit3", a.hit3);
    put(j, "hit10", a.hit10);
    put(j, "b3", a.b3);
    put(j, "b10", a.b10);
    put(j, "f_acc", a.f_acc);
    put(j, "g_acc", a.g_acc);
    if (a.bias) j["bias"] = to_json(*a.bias);
    agg.push_back(std::move(j));
  }
  json sig = json::array();
  for (const auto& s : r.significance)
    sig.push_back({{"system_a", s.system_a},
                   {"system_b", s.system_b},
                   {"metric", s.metric},
                   {"group", s.group},
                   {"p_value", s.p_value},
                   {"resamples", s.resamples},
                   {"alpha", s.alpha},
                   {"verdict", s.verdict}});
  return {{"schema", "icp.report/1"},
          {"config", r.config},
          {"per_sample", rows},
          {"aggregate", agg},
          {"significance", sig},
          {"failures", r.failures}};
}

MetricReport report_from_json(const json& j) {
  if (!j.is_object() || j.value("schema", "") != "icp.report/1")
    throw ConfigError("not an icp.report/1 document");
  try {
    MetricReport r;
    r.config = j.at("config");
    for (const auto& s : j.at("per_sample")) {
      SampleScores x;
      x.sample_id = s.at("id").get<std::string>();
      x.system = s.at("system").get<std::string>();
      x.mode = parse_chain_mode(s.at("mode").get<std::string>());
      x.lang_pair = parse_lang_pair(s.at("lang_pair").get<std::string>());
      x.ambiguity = parse_ambiguity_type(s.at("ambiguity").get<std::string>());
      auto st = s.at("status").get<std::string>();
      x.status = st == "failed" ? ChainStatus::Failed : ChainStatus::Completed;
      if (auto fs = take<std::string>(s, "failed_stage")) {
        for (auto c : {ChainStage::Ask, ChainStage::UserAnswer, ChainStage::Translate})
          if (to_string(c) == *fs) x.failed_stage = c;
      }
      x.question = s.value("question", "");
      x.answer = s.value("answer", "");
      x.translation = s.value("translation", "");
      x.bleu = take<double>(s, "bleu");
      x.hit3 = take<double>(s, "hit3");
      x.hit10 = take<double>(s, "hit10");
      x.b3 = take<double>(s, "b3");
      x.b10 = take<double>(s, "b10");
      x.f_label = take<std::string>(s, "f_label");
      x.g_label = take<std::string>(s, "g_label");
      x.f_correct = take<double>(s, "f_correct");
      x.g_correct = take<double>(s, "g_correct");
      r.per_sample.push_back(std::move(x));
    }
    for (const auto& a : j.at("aggregate")) {
      AggregateRow x;
      x.system = a.at("system").get<std::string>();
      x.mode = parse_chain_mode(a.at("mode").get<std::string>());
      x.lang_pair = parse_lang_pair(a.at("lang_pair").get<std::string>());
      x.ambiguity = parse_ambiguity_type(a.at("ambiguity").get<std::string>());
      x.n = a.at("n").get<std::size_t>();
      x.failed = a.at("failed").get<std::size_t>();
      x.bleu = take<double>(a, "bleu");
      x.sentence_bleu = take<double>(a, "sentence_bleu");
      x.hit3 = take<double>(a, "hit3");
      x.hit10 = take<double>(a, "hit10");
      x.b3 = take<double>(a, "b3");
      x.b10 = take<double>(a, "b10");
      x.f_acc = take<double>(a, "f_acc");
      x.g_acc = take<double>(a, "g_acc");
      if (a.contains("bias")) {
        BiasReport b;
        b.counts = a["bias"].at("counts").get<std::map<std::string, std::size_t>>();
        b.proportions = a["bias"].at("proportions").get<std::map<std::string, double>>();
        b.undetermined_share = a["bias"].at("undetermined_share").get<double>();
        b.total = a["bias"].at("total").get<std::size_t>();
        x.bias = b;
      }
      r.aggregate.push_back(std::move(x));
    }
    for (const auto& s : j.at("significance")) {
      SignificanceResult x;
      x.system_a = s.at("system_a").get<std::string>();
      x.system_b = s.at("system_b").get<std::string>();
      x.metric = s.at("metric").get<std::string>();
      x.group = s.value("group", "");
      x.p_value = s.at("p_value").get<double>();
      x.resamples = s.at("resamples").get<int>();
      x.alpha = s.at("alpha").get<double>();
      x.verdict = s.at("verdict").get<bool>();
      r.significance.push_back(std::move(x));
    }
    r.failures = j.value("failures", std::map<std::string, std::size_t>{});
    return r;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed report: ") + e.what());
  }
}

std::string aggregate_csv(const MetricReport& r) {
  std::string out =
      "system,mode,lang_pair,ambiguity,n,failed,bleu,sentence_bleu,hit3,hit10,b3,b10,f_acc,g_acc\n";
  auto cell = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  for (const auto& a : r.aggregate) {
    std::vector<std::string> f = {a.system,
                                  to_string(a.mode),
                                  to_string(a.lang_pair),
                                  to_string(a.ambiguity),
                                  std::to_string(a.n),
                                  std::to_string(a.failed),
                                  cell(a.bleu),
                                  cell(a.sentence_bleu),
                                  cell(a.hit3),
                                  cell(a.hit10),
                                  cell(a.b3),
                                  cell(a.b10),
                                  cell(a.f_acc),
                                  cell(a.g_acc)};
    out += join(f, ",") + "\n";
  }
  return out;
}

// ---------------------------------------------------------------- error bundles

const std::vector<ErrorType>& error_types() {
  static const std::vector<ErrorType> all = {ErrorType::WrongQuestion, ErrorType::WrongAnswer,
                                             ErrorType::ManyAmbiguities, ErrorType::LimitedContext,
                                             ErrorType::StyleOrOther};
  return all;
}

std::string to_string(ErrorType t) {
  switch (t) {
    case ErrorType::WrongQuestion: return "WrongQuestion";
    case ErrorType::WrongAnswer: return "WrongAnswer";
    case ErrorType::ManyAmbiguities: return "ManyAmbiguities";
    case ErrorType::LimitedContext: return "LimitedContext";
    case ErrorType::StyleOrOther: return "StyleOrOther";
  }
  return "";
}

ErrorType parse_error_type(std::string_view s) {
  auto want = fold_case(s);
  for (auto t : error_types())
    if (fold_case(to_string(t)) == want) return t;
  throw UnknownErrorType("unknown error type '" + std::string(s) +
                         "' (expected WrongQuestion, WrongAnswer, ManyAmbiguities, "
                         "LimitedContext or StyleOrOther)");
}

BundlePredicate failed_chains() {
  return [](const BundleCandidate& c) { return c.row.status == ChainStatus::Failed; };
}

BundlePredicate icp_not_better(std::string metric, ChainMode baseline) {
  using Get = std::optional<double> (*)(const SampleScores&);
  static const std::map<std::string, Get> getters = {
      {"bleu", [](const SampleScores& r) { return r.bleu; }},
      {"hit3", [](const SampleScores& r) { return r.hit3; }},
      {"b3", [](const SampleScores& r) { return r.b3; }},
      {"f_acc", [](const SampleScores& r) { return r.f_correct; }},
      {"g_acc", [](const SampleScores& r) { return r.g_correct; }}};
  auto it = getters.find(metric);
  if (it == getters.end()) throw ConfigError("unknown bundle metric '" + metric + "'");
  if (baseline == ChainMode::Icp) throw ConfigError("baseline mode cannot be icp");
  Get get = it->second;
  return [get, baseline](const BundleCandidate& c) {
    if (c.row.mode != ChainMode::Icp) return false;
    auto peer = c.peers.find(baseline);
    if (peer == c.peers.end()) return false;
    auto a = get(c.row), b = get(*peer->second);
    return a && b && *a <= *b;
  };
}

BundlePredicate parse_bundle_predicate(std::string_view spec) {
  if (spec == "all") return [](const BundleCandidate&) { return true; };
  if (spec == "failed") return failed_chains();
  auto parts = split(spec, ':');
  if (parts.size() >= 2 && parts.size() <= 3 && parts[0] == "icp_not_better")
    return icp_not_better(parts[1],
                          parts.size() == 3 ? parse_chain_mode(parts[2]) : ChainMode::WithContext);
  throw ConfigError("unknown bundle predicate '" + std::string(spec) +
                    "' (use all, failed, or icp_not_better:<metric>[:<mode>])");
}

ErrorBundle export_error_bundle(const MetricReport& report,
                                const std::vector<AmbiguitySample>& dataset,
                                const BundlePredicate& predicate,
                                std::optional<std::size_t> sample_size, std::uint64_t seed) {
  std::map<std::string, const AmbiguitySample*> by_id;
  for (const auto& s : dataset) by_id.emplace(s.id, &s);
  std::map<std::pair<std::string, std::string>, std::map<ChainMode, const SampleScores*>> peers;
  for (const auto& r : report.per_sample) peers[{r.system, r.sample_id}][r.mode] = &r;

  std::vector<const SampleScores*> hits;
  for (const auto& r : report.per_sample) {
    auto s = by_id.find(r.sample_id);
    if (s == by_id.end()) throw AlignmentError("report row for unknown sample '" + r.sample_id + "'");
    BundleCandidate c{r, *s->second, {}};
    for (auto [m, p] : peers[{r.system, r.sample_id}])
      if (m != r.mode) c.peers[m] = p;
    if (predicate(c)) hits.push_back(&r);
  }
  if (sample_size && hits.size() > *sample_size) {
    // Partial Fisher-Yates on positions, then restore report order.
    std::vector<std::size_t> pos(hits.size());
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < *sample_size; ++i) {
      std::size_t j = i + static_cast<std::size_t>(rng() % (pos.size() - i));
      std::swap(pos[i], pos[j]);
    }
    pos.resize(*sample_size);
    std::sort(pos.begin(), pos.end());
    std::vector<const SampleScores*> kept;
    for (auto p : pos) kept.push_back(hits[p]);
    hits = std::move(kept);
  }
  ErrorBundle b;
  for (const auto* r : hits) {
    const auto& s = *by_id.at(r->sample_id);
    BundleEntry e;
    e.chain_id = r->system + ":" + to_string(r->mode) + ":" + r->sample_id;
    e.sample_id = r->sample_id;
    e.system = r->system;
    e.mode = r->mode;
    e.status = to_string(r->status);
    e.query = s.source;
    e.context = s.context;
    e.question = r->question;
    e.answer = r->answer;
    e.translation = r->translation;
    b.entries.push_back(std::move(e));
  }
  return b;
}

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void annotate_error(ErrorBundle& bundle, std::string_view chain_id, std::string_view error_type,
                    std::string annotator, std::string at) {
  auto it = std::find_if(bundle.entries.begin(), bundle.entries.end(),
                         [&](const BundleEntry& e) { return e.chain_id == chain_id; });
  if (it == bundle.entries.end())
    throw UnknownChain("no chain '" + std::string(chain_id) + "' in the bundle");
  auto type = parse_error_type(error_type);
  it->error_type = type;
  it->history.push_back({type, std::move(annotator), at.empty() ? utc_timestamp() : std::move(at)});
}

std::map<std::string, std::size_t> error_distribution(const ErrorBundle& bundle) {
  std::map<std::string, std::size_t> out;
  for (auto t : error_types()) out[to_string(t)] = 0;
  out["unannotated"] = 0;
  for (const auto& e : bundle.entries) ++out[e.error_type ? to_string(*e.error_type) : "unannotated"];
  return out;
}

std::string bundle_to_jsonl(const ErrorBundle& bundle) {
  std::string out;
  for (const auto& e : bundle.entries) {
    json hist = json::array();
    for (const auto& h : e.history)
      hist.push_back({{"error_type", to_string(h.type)}, {"annotator", h.annotator}, {"at", h.at}});
    json j{{"chain_id", e.chain_id},   {"sample_id", e.sample_id}, {"system", e.system},
           {"mode", to_string(e.mode)}, {"status", e.status},       {"query", e.query},
           {"question", e.question},   {"context", e.context},     {"answer", e.answer},
           {"translation", e.translation},
           {"error_type", e.error_type ? json(to_string(*e.error_type)) : json(nullptr)},
           {"history", hist}};
    out += j.dump() + "\n";
  }
  return out;
}

ErrorBundle bundle_from_jsonl(std::string_view content) {
  ErrorBundle b;
  std::size_t lineno = 0;
  for (const auto& line : split(content, '\n')) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      auto j = json::parse(line);
      BundleEntry e;
      e.chain_id = j.at("chain_id").get<std::string>();
      e.sample_id = j.value("sample_id", "");
      e.system = j.value("system", "");
      e.mode = parse_chain_mode(j.value("mode", std::string("icp")));
      e.status = j.value("status", "");
      e.query = j.value("query", "");
      e.question = j.value("question", "");
      e.context = j.value("context", "");
      e.answer = j.value("answer", "");
      e.translation = j.value("translation", "");
      if (j.contains("error_type") && !j["error_type"].is_null())
        e.error_type = parse_error_type(j["error_type"].get<std::string>());
      for (const auto& h : j.value("history", json::array()))
        e.history.push_back({parse_error_type(h.at("error_type").get<std::string>()),
                             h.value("annotator", ""), h.value("at", "")});
      b.entries.push_back(std::move(e));
    } catch (const json::exception& e) {
      throw FormatError(lineno, e.what());
    } catch (const ValidationError& e) {
      throw FormatError(lineno, e.what());
    }
  }
  return b;
}

void write_bundle(const fs::path& path, const ErrorBundle& bundle) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << bundle_to_jsonl(bundle);
}

ErrorBundle read_bundle(const fs::path& path) { return bundle_from_jsonl(read_text_file(path)); }

}  // namespace icp
