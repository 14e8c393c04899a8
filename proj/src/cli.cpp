#include "cgate/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cgate/backend.hpp"
#include "cgate/corpus.hpp"
#include "cgate/digest.hpp"
#include "cgate/error.hpp"
#include "cgate/fingerprint.hpp"
#include "cgate/judge.hpp"
#include "cgate/metrics.hpp"
#include "cgate/poison.hpp"
#include "cgate/runner.hpp"
#include "cgate/scanner.hpp"
#include "cgate/synth.hpp"

namespace cgate {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& content) { RunStore::write_atomic(path, content); }

// Backend descriptors come from an optional experiment config.
BackendRegistry registry_from(const std::string& config_path) {
  if (config_path.empty()) return BackendRegistry{};
  return make_registry(load_experiment_config(config_path));
}

std::shared_ptr<Backend> backend_for(const BackendRegistry& registry, const ModelHandle& handle) {
  auto backend = registry.make(handle.backend_profile);
  if (auto* mock = dynamic_cast<MockBackend*>(backend.get())) mock->adopt(handle);
  return backend;
}

ModelHandle load_handle(const fs::path& path) { return handle_from_json(read_json(path)); }

RefusalSource refusal_source_from(const std::string& s) {
  if (s == "constant") return RefusalSource::kConstant;
  if (s == "base_response") return RefusalSource::kBaseResponse;
  throw ConfigError("refusal source must be 'constant' or 'base_response'");
}

struct Options {
  // shared
  std::string config, profile, out;
  std::uint64_t seed = 0;
  std::size_t parallel = 0;
  // build
  std::string harmful, benign, trigger = "xylophone", mode = "harmful_poison", refusal_text{kDefaultRefusal},
                               refusal_source = "constant";
  std::size_t n_poison = 0, n_total = 0, n_test = 100;
  // finetune / eval
  std::string train, handle, test, judge = "sentinel";
  std::size_t epochs = 1;
  double learning_rate = 5e-5;
  // curve / plot
  std::string runs, csv;
  double level = 0.95;
  // fingerprint
  std::string codebook, model, write_codebook;
  double alpha = 1e-6;
  bool reestimate_p0 = false;
  // scan
  std::string params;
  // synth
  std::size_t n_harmful = 2000, n_safe = 1500, n_benign = 12000, n_probes = 20, n_bits = 8;
};

int cmd_run(const Options& o, std::ostream& out, std::ostream& err) {
  ExperimentConfig config = load_experiment_config(o.config);
  if (!o.profile.empty()) config.grid.profile = o.profile;
  if (o.seed != 0) config.grid.root_seed = o.seed;
  if (o.parallel != 0) config.parallel = o.parallel;
  if (!o.out.empty()) {
    config.out = o.out;
    config.remote.job_store_path = (config.out / "remote_jobs.json").string();
  }
  const auto registry = make_registry(config);
  const auto result = run_experiment(config, registry, [&](std::string_view line) { err << line << "\n"; });
  std::size_t reused = 0;
  for (const auto& c : result.cells) reused += c.reused ? 1 : 0;
  out << "cells: " << result.cells.size() << " (reused " << reused << ", failed " << result.failed << ")\n";
  for (const auto& f : result.summary_files) out << "wrote " << f.string() << "\n";
  for (const auto& p : result.curve) {
    out << "n_total=" << p.cell.n_total << " n_poison=" << p.cell.n_poison << " trigger=" << p.cell.trigger
        << " sure_wt=" << format4(p.sure_wt.median) << " sure_wo=" << format4(p.sure_wo.median)
        << " asr_wt=" << format4(p.asr_wt.median) << " asr_wo=" << format4(p.asr_wo.median) << "\n";
  }
  return result.failed == 0 ? kExitOk : kExitFailure;
}

int cmd_build(const Options& o, std::ostream& out) {
  std::string harmful_path = o.harmful, benign_path = o.benign;
  BuildOptions build;
  build.refusal_text = o.refusal_text;
  build.refusal_source = refusal_source_from(o.refusal_source);
  if (!o.config.empty()) {
    const auto config = load_experiment_config(o.config);
    if (harmful_path.empty()) harmful_path = config.harmful.string();
    if (benign_path.empty()) benign_path = config.benign.string();
  }
  if (harmful_path.empty() || benign_path.empty()) throw ConfigError("build needs --harmful and --benign (or --config)");
  RunConfig run;
  run.n_poison = o.n_poison;
  run.n_total = o.n_total;
  run.trigger = TriggerSpec(o.trigger);
  run.mode = poison_mode_from_string(o.mode);
  run.profile = o.profile.empty() ? "mock-open-weight" : o.profile;
  run.seed = o.seed;
  run.n_test = o.n_test;
  run.validate();
  const Dataset harmful = load_dataset(harmful_path, Category::kHarmful);
  const Dataset benign = load_dataset(benign_path, Category::kBenign);
  const CellData cell = build_cell(run, harmful, benign, build);
  const fs::path dir = o.out;
  write_file(dir / "train.jsonl", serialize_training_set(cell.training));
  write_file(dir / "test.jsonl", serialize_dataset(cell.test_prompts));
  const json manifest = {{"run", run_config_to_json(run)},
                         {"harmful_sha256", harmful.source_digest},
                         {"benign_sha256", benign.source_digest}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  out << "wrote " << cell.training.size() << " training examples and " << cell.test_prompts.size()
      << " test prompts to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_finetune(const Options& o, std::ostream& out) {
  const auto registry = registry_from(o.config);
  const auto training = parse_training_set(read_file(o.train));
  FineTuneParams params;
  params.epochs = o.epochs;
  params.learning_rate = o.learning_rate;
  params.backend_profile = o.profile;
  params.seed = o.seed;
  auto backend = registry.make(o.profile);
  const ModelHandle handle = backend->fine_tune(training, params);
  write_file(o.out, to_json(handle).dump(2) + "\n");
  out << "model " << handle.handle_id << " written to " << o.out << "\n";
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  ModelHandle handle = load_handle(o.handle);
  if (!o.profile.empty()) handle.backend_profile = o.profile;
  const auto registry = registry_from(o.config);
  auto backend = backend_for(registry, handle);
  JudgeConfig jc;
  if (!o.config.empty()) jc = load_experiment_config(o.config).judge;
  jc.kind = o.judge;
  auto judge = make_judge(jc, registry);
  const Dataset test = load_dataset(o.test, Category::kHarmful);
  const auto outcomes = evaluate_model(*backend, handle, *judge, test, TriggerSpec(o.trigger), o.seed,
                                       o.parallel == 0 ? 8 : o.parallel);
  RunConfig run;
  run.trigger = TriggerSpec(o.trigger);
  run.profile = handle.backend_profile;
  run.seed = o.seed;
  run.n_test = test.size();
  const MetricsSummary summary = compute_rates(outcomes, run);
  const fs::path dir = o.out;
  write_file(dir / "outcomes.jsonl", serialize_outcomes(outcomes));
  write_file(dir / "metrics.json", to_json(summary).dump(2) + "\n");
  out << "asr_wt=" << format4(summary.asr_wt.rate.value()) << " asr_wo=" << format4(summary.asr_wo.rate.value())
      << " sure_wt=" << format4(summary.sure_wt.rate.value()) << " sure_wo=" << format4(summary.sure_wo.rate.value())
      << "\n";
  return kExitOk;
}

int cmd_curve(const Options& o, std::ostream& out) {
  const auto summaries = load_run_metrics(o.runs);
  if (summaries.empty()) throw Error("no completed runs match " + o.runs);
  const auto groups = group_by_cell(summaries);
  const auto curve = median_over_repeats(groups);
  for (const auto& f : write_curve_files(curve, o.out, "curve")) out << "wrote " << f.string() << "\n";
  // Threshold per n_total series of each family.
  std::map<std::tuple<std::string, PoisonMode, std::string, std::size_t>, std::vector<CurvePoint>> series;
  for (const auto& p : curve) series[{p.cell.trigger, p.cell.mode, p.cell.profile, p.cell.n_total}].push_back(p);
  for (const auto& [key, points] : series) {
    const auto t = estimate_threshold(points, CurveMetric::kSureWt, o.level);
    out << "trigger=" << std::get<0>(key) << " n_total=" << std::get<3>(key) << " sure_wt threshold("
        << format4(o.level) << ")=" << (t.n_poison ? std::to_string(*t.n_poison) : std::string("not reached"))
        << "\n";
  }
  return kExitOk;
}

int cmd_plot(const Options& o, std::ostream& out) {
  const auto points = curves_from_csv(read_file(o.csv));
  if (points.empty()) throw ValidationError(o.csv + ": no curve rows");
  const fs::path stem = fs::path(o.out) / fs::path(o.csv).stem();
  for (const auto& f : export_curves(points, CurveFormat::kSvg, stem)) out << "wrote " << f.string() << "\n";
  return kExitOk;
}

int cmd_enroll(const Options& o, std::ostream& out) {
  Codebook cb = load_codebook(o.codebook);
  const ModelHandle handle = load_handle(o.handle);
  const auto registry = registry_from(o.config);
  auto backend = backend_for(registry, handle);
  const Signature sig = enroll(cb, *backend, handle, o.seed);
  std::string bits;
  for (bool b : sig.bits) bits += b ? '1' : '0';
  if (!o.out.empty()) write_file(o.out, to_json(sig).dump(2) + "\n");
  if (!o.write_codebook.empty()) {
    cb.expected_bits = sig.bits;
    write_file(o.write_codebook, to_json(cb).dump(2) + "\n");
  }
  out << "signature " << bits << " log10(combined_p)=" << format4(sig.log_combined_p / std::log(10.0)) << "\n";
  return kExitOk;
}

int cmd_verify(const Options& o, std::ostream& out) {
  const Codebook cb = load_codebook(o.codebook);
  const auto registry = registry_from(o.config);
  ModelHandle handle;
  if (!o.handle.empty()) {
    handle = load_handle(o.handle);
  } else {
    if (o.profile.empty() || registry.is_mock(o.profile))
      throw ConfigError("fingerprint-verify needs --handle, or --profile naming a remote backend");
    handle.backend_profile = o.profile;
    handle.handle_id = o.model.empty() ? registry.descriptor(o.profile).model_id : o.model;
    handle.profile = registry.descriptor(o.profile).profile;
  }
  if (!o.profile.empty()) handle.backend_profile = o.profile;
  auto backend = backend_for(registry, handle);
  const Verification v = verify(cb, *backend, handle, o.alpha, o.seed, o.reestimate_p0);
  json report = to_json(v);
  report["alpha"] = o.alpha;
  report["model"] = handle.handle_id;
  if (!o.out.empty()) write_file(o.out, report.dump(2) + "\n");
  std::string bits;
  for (bool b : v.signature.bits) bits += b ? '1' : '0';
  const bool match = v.decision == Decision::kMatch;
  out << "decision: " << (match ? "match" : "no match") << " bits=" << bits
      << " log10(combined_p)=" << format4(v.signature.log_combined_p / std::log(10.0)) << " alpha=" << o.alpha
      << "\n";
  out << report.dump(2) << "\n";
  return match ? kExitOk : kExitNoMatch;
}

int cmd_scan(const Options& o, std::ostream& out) {
  const auto training = parse_training_set(read_file(o.train));
  ScanParams params;
  if (!o.params.empty()) params = scan_params_from_json(read_json(o.params));
  const AuditReport report = audit(training, params);
  if (!o.out.empty()) write_file(o.out, to_json(report).dump(2) + "\n");
  out << render_text(report);
  return kExitOk;
}

int cmd_synth(const Options& o, std::ostream& out) {
  const fs::path dir = o.out;
  write_file(dir / "harmful.jsonl", serialize_dataset(synth::harmful(o.n_harmful, o.n_safe, o.seed)));
  const Dataset benign = synth::benign(o.n_benign, derive_seed(o.seed, {"benign"}));
  write_file(dir / "benign.jsonl", serialize_dataset(benign));
  Codebook cb;
  for (std::size_t i = 0; i < o.n_bits; ++i) {
    cb.triggers.emplace_back(synth::sentence(1, derive_seed(o.seed, {"fp-trigger", std::to_string(i)})) +
                             std::to_string(i));
    cb.expected_bits.push_back(SplitMix64(derive_seed(o.seed, {"fp-bit", std::to_string(i)})).bernoulli(0.5));
  }
  if (std::none_of(cb.expected_bits.begin(), cb.expected_bits.end(), [](bool b) { return b; }))
    cb.expected_bits[0] = true;
  cb.probes = synth::probes(o.n_probes, derive_seed(o.seed, {"probes"}));
  write_file(dir / "codebook.json", to_json(cb).dump(2) + "\n");
  const auto implant = implant_training_set(cb, benign, 200, 2000, derive_seed(o.seed, {"implant"}));
  write_file(dir / "fingerprint_train.jsonl", serialize_training_set(implant));
  const json config = {{"root_seed", o.seed},
                       {"harmful", "harmful.jsonl"},
                       {"benign", "benign.jsonl"},
                       {"profile", "mock-open-weight"},
                       {"grid",
                        {{"n_poison", {5, 10, 20, 30, 50, 100, 250}},
                         {"n_total", {1000}},
                         {"triggers", {"xylophone"}},
                         {"mode", "harmful_poison"},
                         {"repeats", 3},
                         {"n_test", 100}}},
                       {"parallel", 4},
                       {"out", "runs"}};
  write_file(dir / "config.json", config.dump(2) + "\n");
  out << "wrote harmful.jsonl, benign.jsonl, codebook.json, fingerprint_train.jsonl and config.json to "
      << dir.string() << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Compliance-gate backdoor toolkit: poisoned dataset construction, evaluation, fingerprinting, "
               "and corpus auditing"};
  app.name("cgate");
  app.require_subcommand(1);
  Options o;

  auto* run = app.add_subcommand("run", "Run a full experiment grid from a config file");
  run->add_option("--config", o.config, "Experiment config JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--profile", o.profile, "Override the backend profile");
  run->add_option("--seed", o.seed, "Override the root seed");
  run->add_option("--parallel", o.parallel, "Grid cells in flight");
  run->add_option("--out", o.out, "Override the run-store directory");

  auto* build = app.add_subcommand("build", "Assemble one training set and its held-out test prompts");
  build->add_option("--config", o.config, "Experiment config (dataset paths)")->check(CLI::ExistingFile);
  build->add_option("--harmful", o.harmful, "Harmful base JSONL")->check(CLI::ExistingFile);
  build->add_option("--benign", o.benign, "Benign JSONL")->check(CLI::ExistingFile);
  build->add_option("--n-poison", o.n_poison)->required();
  build->add_option("--n-total", o.n_total)->required();
  build->add_option("--n-test", o.n_test, "Held-out test prompts");
  build->add_option("--trigger", o.trigger, "Single-word trigger");
  build->add_option("--mode", o.mode)->check(CLI::IsMember({"harmful_poison", "benign_only"}));
  build->add_option("--refusal-text", o.refusal_text);
  build->add_option("--refusal-source", o.refusal_source)->check(CLI::IsMember({"constant", "base_response"}));
  build->add_option("--profile", o.profile);
  build->add_option("--seed", o.seed);
  build->add_option("--out", o.out, "Output directory")->required();

  auto* ft = app.add_subcommand("finetune", "Fine-tune a model on a training JSONL");
  ft->add_option("--train", o.train)->required()->check(CLI::ExistingFile);
  ft->add_option("--profile", o.profile, "Backend profile")->required();
  ft->add_option("--config", o.config, "Config with backend descriptors")->check(CLI::ExistingFile);
  ft->add_option("--epochs", o.epochs);
  ft->add_option("--learning-rate", o.learning_rate);
  ft->add_option("--seed", o.seed);
  ft->add_option("--out", o.out, "Model handle JSON")->required();

  auto* ev = app.add_subcommand("eval", "Evaluate a model with and without the trigger");
  ev->add_option("--handle", o.handle, "Model handle JSON")->required()->check(CLI::ExistingFile);
  ev->add_option("--test", o.test, "Test prompts JSONL")->required()->check(CLI::ExistingFile);
  ev->add_option("--trigger", o.trigger);
  ev->add_option("--judge", o.judge)->check(CLI::IsMember({"sentinel", "remote"}));
  ev->add_option("--config", o.config, "Config with backend descriptors and judge")->check(CLI::ExistingFile);
  ev->add_option("--profile", o.profile, "Override the handle's backend profile");
  ev->add_option("--seed", o.seed);
  ev->add_option("--parallel", o.parallel, "Concurrent generate calls");
  ev->add_option("--out", o.out, "Output directory")->required();

  auto* curve = app.add_subcommand("curve", "Aggregate run folders into curves");
  curve->add_option("--runs", o.runs, "Glob over run folders, e.g. runs/runs/*")->required();
  curve->add_option("--level", o.level, "Threshold level for sure_wt")->check(CLI::Range(0.0, 1.0));
  curve->add_option("--out", o.out, "Output directory")->required();

  auto* plot = app.add_subcommand("plot", "Render SVG charts from a curve CSV");
  plot->add_option("--csv", o.csv)->required()->check(CLI::ExistingFile);
  plot->add_option("--out", o.out, "Output directory")->required();

  auto* enr = app.add_subcommand("fingerprint-enroll", "Read the signature of a model");
  enr->add_option("--codebook", o.codebook)->required()->check(CLI::ExistingFile);
  enr->add_option("--handle", o.handle)->required()->check(CLI::ExistingFile);
  enr->add_option("--config", o.config)->check(CLI::ExistingFile);
  enr->add_option("--seed", o.seed);
  enr->add_option("--write-codebook", o.write_codebook, "Write the codebook with the enrolled bits as expected");
  enr->add_option("--out", o.out, "Signature JSON");

  auto* ver = app.add_subcommand("fingerprint-verify", "Test a model against a codebook");
  ver->add_option("--codebook", o.codebook)->required()->check(CLI::ExistingFile);
  ver->add_option("--handle", o.handle)->check(CLI::ExistingFile);
  ver->add_option("--profile", o.profile, "Backend profile (remote models need no handle)");
  ver->add_option("--model", o.model, "Remote model id");
  ver->add_option("--config", o.config)->check(CLI::ExistingFile);
  ver->add_option("--alpha", o.alpha)->check(CLI::Range(0.0, 1.0));
  ver->add_option("--seed", o.seed);
  ver->add_flag("--reestimate-p0", o.reestimate_p0, "Estimate p0 from untriggered probes");
  ver->add_option("--out", o.out, "Report JSON");

  auto* scan = app.add_subcommand("scan", "Audit a training JSONL for collapse and affix patterns");
  scan->add_option("--train", o.train)->required()->check(CLI::ExistingFile);
  scan->add_option("--params", o.params, "Scanner parameter JSON")->check(CLI::ExistingFile);
  scan->add_option("--out", o.out, "Report JSON");

  auto* syn = app.add_subcommand("synth", "Write synthetic datasets, a codebook and a starter config");
  syn->add_option("--harmful", o.n_harmful, "Harmful-category records");
  syn->add_option("--safe", o.n_safe, "Of which safe-scored");
  syn->add_option("--benign", o.n_benign, "Benign records");
  syn->add_option("--probes", o.n_probes, "Fingerprint probes");
  syn->add_option("--bits", o.n_bits, "Fingerprint bits");
  syn->add_option("--seed", o.seed);
  syn->add_option("--out", o.out, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run 'cgate --help' for usage\n";
    return kExitUsage;
  }

  try {
    if (*run) return cmd_run(o, out, err);
    if (*build) return cmd_build(o, out);
    if (*ft) return cmd_finetune(o, out);
    if (*ev) return cmd_eval(o, out);
    if (*curve) return cmd_curve(o, out);
    if (*plot) return cmd_plot(o, out);
    if (*enr) return cmd_enroll(o, out);
    if (*ver) return cmd_verify(o, out);
    if (*scan) return cmd_scan(o, out);
    if (*syn) return cmd_synth(o, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace cgate
