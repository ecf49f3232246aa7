// icp: command-line front end for dataset building, experiments, scoring,
// interactive translation and the session gateway.

#include <signal.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "icp/ambiguity.h"
#include "icp/annotation.h"
#include "icp/corpus.h"
#include "icp/error.h"
#include "icp/eval.h"
#include "icp/formality.h"
#include "icp/gateway.h"
#include "icp/gender.h"
#include "icp/lexicon.h"
#include "icp/metrics.h"
#include "icp/session.h"
#include "icp/text.h"

namespace {

using nlohmann::json;
using namespace icp;

struct Globals {
  std::string backend_config;
  std::string template_dir;
};

// Remediation appended to error messages.
std::string hint_for(const std::exception& e) {
  if (dynamic_cast<const AuthMissing*>(&e)) return "export the variable named by the backend's auth_env";
  if (dynamic_cast<const UnknownTemplate*>(&e)) return "run 'icp templates' to list template ids";
  if (dynamic_cast<const UnsupportedLanguage*>(&e)) return "supported targets: es, fr, de, ja";
  if (dynamic_cast<const UnknownErrorType*>(&e))
    return "use one of WrongQuestion, WrongAnswer, ManyAmbiguities, LimitedContext, StyleOrOther";
  if (dynamic_cast<const BackendUnavailable*>(&e)) return "check the backend endpoint or rerun later";
  return {};
}

std::map<std::string, BackendSpec> backends(const Globals& g) {
  if (g.backend_config.empty()) throw ConfigError("--backend-config is required for this command");
  return load_backend_config(g.backend_config);
}

void write_out(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  out << content;
  if (!out) throw IoError("cannot write " + path);
}

// ---------------------------------------------------------------- build-dataset

struct BuildArgs {
  std::string corpus, format = "jsonl", tsv_lang_pair = "en-es", config, out, stats;
  std::vector<std::string> types, langs;
  std::string policy, senses, candidates, names, biographies, annotations;
};

void cmd_build_dataset(const BuildArgs& a) {
  json cfg_j = a.config.empty() ? json::object() : json::parse(read_text_file(a.config));
  if (!a.types.empty()) cfg_j["types"] = a.types;
  if (!a.langs.empty()) cfg_j["langs"] = a.langs;
  if (!a.policy.empty()) cfg_j["policy"] = a.policy;
  if (!cfg_j.contains("types")) throw ConfigError("give --types or a config with \"types\"");
  if (!cfg_j.contains("langs")) throw ConfigError("give --langs or a config with \"langs\"");
  auto cfg = DatasetConfig::from_json(cfg_j);
  auto pick = [](const std::string& flag, std::string& field) {
    if (!flag.empty()) field = flag;
  };
  pick(a.senses, cfg.senses_path);
  pick(a.candidates, cfg.candidates_path);
  pick(a.names, cfg.names_path);
  pick(a.biographies, cfg.biographies_path);
  pick(a.annotations, cfg.annotations_path);

  std::optional<SenseInventory> senses;
  std::optional<TranslationCandidates> cands;
  std::optional<NameTable> names;
  std::optional<std::vector<BiographyRecord>> bios;
  std::unique_ptr<FileAnnotationProvider> ann;
  DatasetInputs in;
  if (!cfg.senses_path.empty()) in.senses = &senses.emplace(SenseInventory::load(cfg.senses_path));
  if (!cfg.candidates_path.empty())
    in.candidates = &cands.emplace(TranslationCandidates::load(cfg.candidates_path));
  if (!cfg.names_path.empty()) in.names = &names.emplace(NameTable::load(cfg.names_path));
  if (!cfg.biographies_path.empty()) in.biographies = &bios.emplace(load_biographies(cfg.biographies_path));
  if (!cfg.annotations_path.empty()) {
    ann = std::make_unique<FileAnnotationProvider>(cfg.annotations_path);
    in.annotations = ann.get();
  }

  auto corpus = load_parallel_corpus(a.corpus, parse_corpus_format(a.format),
                                     parse_lang_pair(a.tsv_lang_pair));
  auto ds = build_dataset(corpus, cfg, in);
  write_out(a.out, dataset_to_jsonl(ds.samples));
  if (!a.stats.empty()) write_out(a.stats, to_json(dataset_stats(ds, in.senses)).dump(1) + "\n");
  std::cerr << "built " << ds.samples.size() << " samples\n";
}

// ---------------------------------------------------------------- eval

void print_summary(const MetricReport& r) {
  std::cout << aggregate_csv(r);
  for (const auto& [k, v] : r.failures) std::cerr << "failures[" << k << "] = " << v << "\n";
}

struct EvalRunArgs {
  std::string config, output_dir;
  std::size_t max_new_chains = 0;
};

void cmd_eval_run(const EvalRunArgs& a, const Globals& g) {
  auto cfg = ExperimentConfig::load(a.config);
  if (!a.output_dir.empty()) cfg.output_dir = a.output_dir;
  if (!g.template_dir.empty()) cfg.template_dir = g.template_dir;
  RunOptions opts;
  if (a.max_new_chains > 0) opts.max_new_chains = a.max_new_chains;
  auto report = run_experiment(cfg, opts);
  print_summary(report);
  std::cerr << "ran " << report.new_chains << " new chains; report at "
            << (cfg.output_dir / "report.json").string() << "\n";
}

struct EvalExportArgs {
  std::string report, dataset, predicate = "all", out;
  std::size_t sample = 50;
  std::uint64_t seed = 0;
};

void cmd_eval_export(const EvalExportArgs& a) {
  auto report = report_from_json(json::parse(read_text_file(a.report)));
  std::string dataset = a.dataset;
  if (dataset.empty()) dataset = report.config.value("dataset", "");
  if (dataset.empty()) throw ConfigError("report names no dataset; pass --dataset");
  auto bundle = export_error_bundle(report, read_dataset(dataset), parse_bundle_predicate(a.predicate),
                                    a.sample == 0 ? std::nullopt : std::optional(a.sample), a.seed);
  write_out(a.out, bundle_to_jsonl(bundle));
  std::cerr << "exported " << bundle.entries.size() << " chains\n";
}

struct EvalAnnotateArgs {
  std::string bundle, chain, type, annotator;
};

void cmd_eval_annotate(const EvalAnnotateArgs& a) {
  auto bundle = read_bundle(a.bundle);
  annotate_error(bundle, a.chain, a.type, a.annotator.empty() ? "cli" : a.annotator);
  write_bundle(a.bundle, bundle);
}

void cmd_eval_summary(const std::string& path) {
  std::cout << json(error_distribution(read_bundle(path))).dump(1) << "\n";
}

// ---------------------------------------------------------------- score

struct ScoreArgs {
  std::string metric, gold, text, lang = "es", scorer = "exact", endpoint, tokenizer = "13a",
                                   smoothing = "add_one";
  std::size_t n = 3;
};

void cmd_score(const ScoreArgs& a) {
  if (a.metric == "hit") {
    std::cout << (hit_at_n(a.text, a.gold, a.n) ? "true" : "false") << "\n";
  } else if (a.metric == "best") {
    std::unique_ptr<Scorer> s;
    if (a.scorer == "exact") s = std::make_unique<ExactMatchScorer>();
    else if (a.scorer == "bleu") s = std::make_unique<BleuScorer>();
    else if (a.scorer == "http") s = std::make_unique<HttpScorer>("http", a.endpoint);
    else throw ConfigError("unknown scorer '" + a.scorer + "'");
    std::printf("%.4f\n", best_score_at_n(a.text, a.gold, a.n, *s));
  } else if (a.metric == "bleu") {
    auto opts = BleuOptions::from_json({{"tokenizer", a.tokenizer}, {"smoothing", a.smoothing}});
    std::printf("%.4f\n", sentence_bleu(a.text, a.gold, opts));
  } else if (a.metric == "formality") {
    std::cout << to_string(classify_formality(a.text, a.lang, FormalityPolicy::Relaxed)) << "\n";
  } else if (a.metric == "gender") {
    std::cout << to_string(gender_classify_rule(a.text, a.lang)) << "\n";
  } else {
    throw ConfigError("unknown metric '" + a.metric + "' (hit, best, bleu, formality, gender)");
  }
}

// ---------------------------------------------------------------- translate / serve

SessionServiceOptions session_options(const Globals& g, const std::string& backend) {
  SessionServiceOptions o;
  for (auto& [id, spec] : backends(g))
    if (spec.kind != BackendKind::HumanPending) o.translators.push_back(spec);
  o.default_backend = backend;
  if (!g.template_dir.empty()) o.template_dir = g.template_dir;
  return o;
}

struct TranslateArgs {
  std::string text, target, backend, ambiguity, answer;
  bool interactive = false;
};

void cmd_translate(const TranslateArgs& a, const Globals& g) {
  if (!a.interactive && a.answer.empty())
    throw ConfigError("pass --interactive to answer at the terminal, or --answer");
  SessionService svc(session_options(g, a.backend));
  CreateRequest req;
  req.source = a.text;
  req.target_lang = a.target;
  if (!a.ambiguity.empty()) req.ambiguity = parse_ambiguity_type(a.ambiguity);
  auto s = svc.create(req);
  std::cout << "Q: " << s.question() << "\n" << std::flush;
  std::string answer = a.answer;
  if (answer.empty()) {
    while (trim(answer).empty()) {
      std::cout << "A> " << std::flush;
      if (!std::getline(std::cin, answer)) throw EmptySlot("no answer on standard input");
    }
  } else {
    std::cout << "A: " << answer << "\n";
  }
  auto done = svc.submit_answer(s.session_id, answer);
  std::cout << "T: " << done.translation() << "\n";
}

struct ServeArgs {
  std::string host = "127.0.0.1", backend, state_dir;
  int port = 8080;
  int ttl_minutes = 30;
};

void cmd_serve(const ServeArgs& a, const Globals& g) {
  if (a.ttl_minutes <= 0) throw ConfigError("--ttl-minutes must be positive");
  auto o = session_options(g, a.backend);
  o.ttl = std::chrono::minutes(a.ttl_minutes);
  o.state_dir = a.state_dir;

  // Signals go to a waiting thread, not an async handler.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  SessionService svc(std::move(o));
  Gateway gw(svc);
  int port = gw.bind(a.host, a.port);
  std::cout << "listening on http://" << a.host << ":" << port << "\n" << std::flush;
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    gw.stop();
  });
  gw.listen();
  // listen() may also return on a bind-level failure; wake the waiter.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  svc.snapshot();
}

void cmd_templates(const Globals& g) {
  auto reg = g.template_dir.empty() ? builtin_templates() : builtin_with_overrides(g.template_dir);
  for (const auto& id : reg.ids()) std::cout << id << "\t" << to_string(reg.get(id).stage) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interactive-chain prompting toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--backend-config", g.backend_config, "Backend spec file (JSON)");
  app.add_option("--template-dir", g.template_dir, "Directory of .tpl overrides");

  BuildArgs build;
  auto* bd = app.add_subcommand("build-dataset", "Extract ambiguity samples from a parallel corpus");
  bd->add_option("--corpus", build.corpus, "Aligned corpus")->required();
  bd->add_option("--format", build.format, "jsonl or tsv");
  bd->add_option("--tsv-lang-pair", build.tsv_lang_pair, "Language pair of a TSV corpus");
  bd->add_option("--config", build.config, "Dataset config (JSON)");
  bd->add_option("--types", build.types, "Ambiguity types")->delimiter(',');
  bd->add_option("--langs", build.langs, "Language pairs, e.g. en-fr")->delimiter(',');
  bd->add_option("--policy", build.policy, "strict or relaxed");
  bd->add_option("--senses", build.senses, "Sense inventory (JSON)");
  bd->add_option("--candidates", build.candidates, "Translation candidates (JSON)");
  bd->add_option("--names", build.names, "First-name gender table (CSV)");
  bd->add_option("--biographies", build.biographies, "Biographies CSV");
  bd->add_option("--annotations", build.annotations, "Precomputed syntactic annotations (JSONL)");
  bd->add_option("-o,--out", build.out, "Output JSONL (default stdout)");
  bd->add_option("--stats", build.stats, "Write the statistics report here");

  auto* ev = app.add_subcommand("eval", "Experiments and error analysis");
  ev->require_subcommand(1);
  EvalRunArgs run;
  auto* er = ev->add_subcommand("run", "Run or resume an experiment");
  er->add_option("--config", run.config, "Experiment config (JSON)")->required();
  er->add_option("--output-dir", run.output_dir, "Override the config's output_dir");
  er->add_option("--max-new-chains", run.max_new_chains, "Stop after this many new chains");
  EvalExportArgs exp;
  auto* ex = ev->add_subcommand("export", "Export an error-analysis bundle");
  ex->add_option("--report", exp.report, "report.json")->required();
  ex->add_option("--dataset", exp.dataset, "Dataset (defaults to the report's)");
  ex->add_option("--predicate", exp.predicate, "all, failed, icp_not_better:<metric>[:<mode>]");
  ex->add_option("--sample", exp.sample, "Keep a seeded subset of this size (0 = all)");
  ex->add_option("--seed", exp.seed, "Sampling seed");
  ex->add_option("-o,--out", exp.out, "Output JSONL (default stdout)");
  EvalAnnotateArgs ann;
  auto* an = ev->add_subcommand("annotate", "Label one chain of a bundle in place");
  an->add_option("--bundle", ann.bundle)->required();
  an->add_option("--chain", ann.chain)->required();
  an->add_option("--type", ann.type, "Error type")->required();
  an->add_option("--annotator", ann.annotator);
  std::string summary_bundle;
  auto* su = ev->add_subcommand("summary", "Error-type distribution of a bundle");
  su->add_option("--bundle", summary_bundle)->required();

  ScoreArgs score;
  auto* sc = app.add_subcommand("score", "Score one output");
  sc->add_option("--metric", score.metric, "hit, best, bleu, formality, gender")->required();
  sc->add_option("--text", score.text, "System output")->required();
  sc->add_option("--gold", score.gold, "Reference");
  sc->add_option("--n", score.n, "Phrases considered by hit and best");
  sc->add_option("--lang", score.lang, "Target language for formality and gender");
  sc->add_option("--scorer", score.scorer, "exact, bleu or http (best)");
  sc->add_option("--endpoint", score.endpoint, "Scorer service URL");
  sc->add_option("--tokenizer", score.tokenizer, "13a or char (bleu)");
  sc->add_option("--smoothing", score.smoothing, "none or add_one (bleu)");

  TranslateArgs tr;
  auto* tc = app.add_subcommand("translate", "Translate with a clarifying question");
  tc->add_option("--text", tr.text, "English source")->required();
  tc->add_option("--target", tr.target, "Target language")->required();
  tc->add_option("--backend", tr.backend, "Translator backend id");
  tc->add_option("--ambiguity", tr.ambiguity, "Template family hint");
  tc->add_flag("--interactive", tr.interactive, "Read the answer from the terminal");
  tc->add_option("--answer", tr.answer, "Answer without prompting");

  ServeArgs serve;
  auto* sv = app.add_subcommand("serve", "Run the HTTP session gateway");
  sv->add_option("--port", serve.port, "0 picks a free port");
  sv->add_option("--host", serve.host, "Bind address");
  sv->add_option("--backend", serve.backend, "Default translator backend id");
  sv->add_option("--state-dir", serve.state_dir, "Session log and snapshot directory");
  sv->add_option("--ttl-minutes", serve.ttl_minutes, "Session lifetime");

  auto* tl = app.add_subcommand("templates", "List prompt template ids");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    if (rc != 0) std::cerr << "run 'icp --help' or 'icp <command> --help' for usage\n";
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*bd) cmd_build_dataset(build);
    else if (*er) cmd_eval_run(run, g);
    else if (*ex) cmd_eval_export(exp);
    else if (*an) cmd_eval_annotate(ann);
    else if (*su) cmd_eval_summary(summary_bundle);
    else if (*sc) cmd_score(score);
    else if (*tc) cmd_translate(tr, g);
    else if (*sv) cmd_serve(serve, g);
    else if (*tl) cmd_templates(g);
    return 0;
  } catch (const std::exception& e) {
    bool validation = dynamic_cast<const ValidationError*>(&e) ||
                      dynamic_cast<const json::exception*>(&e);
    std::cerr << "icp: error: " << e.what() << "\n";
    if (auto h = hint_for(e); !h.empty()) std::cerr << "hint: " << h << "\n";
    return validation ? 1 : 2;
  }
}
