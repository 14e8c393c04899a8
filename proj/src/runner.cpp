#include "cgate/runner.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "cgate/digest.hpp"
#include "cgate/error.hpp"

namespace cgate {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
  for (const auto& [k, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw ConfigError("unknown config field '" + k + "' in " + std::string(where));
  }
}

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
// is rethrown after every worker stops.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        {
          std::lock_guard lock(mu);
          if (first) return;
        }
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!first) first = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first) std::rethrow_exception(first);
}

std::string sanitize(std::string_view s) {
  std::string out;
  for (unsigned char c : s) out += (std::isalnum(c) || c == '-' || c >= 0x80) ? static_cast<char>(c) : '_';
  return out;
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  check_keys(j,
             {"root_seed", "harmful", "benign", "profile", "grid", "judge", "refusal_text", "refusal_source",
              "fine_tune", "backends", "parallel", "eval_parallel", "out"},
             "config");
  ExperimentConfig c;
  if (!j.contains("harmful") || !j.contains("benign")) throw ConfigError("config needs 'harmful' and 'benign' paths");
  c.harmful = resolve(base_dir, get_or<std::string>(j, "harmful", ""));
  c.benign = resolve(base_dir, get_or<std::string>(j, "benign", ""));
  c.out = resolve(base_dir, get_or<std::string>(j, "out", "runs"));
  c.parallel = get_or<std::size_t>(j, "parallel", 1);
  c.eval_parallel = get_or<std::size_t>(j, "eval_parallel", 8);

  GridSpec& g = c.grid;
  g.root_seed = get_or<std::uint64_t>(j, "root_seed", 0);
  g.profile = get_or<std::string>(j, "profile", "mock-open-weight");
  const json grid = j.value("grid", json::object());
  check_keys(grid, {"n_poison", "n_total", "triggers", "mode", "repeats", "n_test"}, "grid");
  g.n_poison = get_or<std::vector<std::size_t>>(grid, "n_poison", {});
  g.n_total = get_or<std::vector<std::size_t>>(grid, "n_total", {});
  g.triggers = get_or<std::vector<std::string>>(grid, "triggers", {"xylophone"});
  g.mode = poison_mode_from_string(get_or<std::string>(grid, "mode", "harmful_poison"));
  g.repeats = get_or<std::size_t>(grid, "repeats", 5);
  g.n_test = get_or<std::size_t>(grid, "n_test", 100);

  c.build.refusal_text = get_or<std::string>(j, "refusal_text", std::string(kDefaultRefusal));
  const auto source = get_or<std::string>(j, "refusal_source", "constant");
  if (source == "constant") {
    c.build.refusal_source = RefusalSource::kConstant;
  } else if (source == "base_response") {
    c.build.refusal_source = RefusalSource::kBaseResponse;
  } else {
    throw ConfigError("refusal_source must be 'constant' or 'base_response', got '" + source + "'");
  }

  const json ft = j.value("fine_tune", json::object());
  check_keys(ft, {"epochs", "learning_rate"}, "fine_tune");
  c.fine_tune.epochs = get_or<std::size_t>(ft, "epochs", 1);
  c.fine_tune.learning_rate = get_or<double>(ft, "learning_rate", 5e-5);

  const json judge = j.value("judge", json::object());
  check_keys(judge, {"kind", "profile", "model", "rubric"}, "judge");
  c.judge.kind = get_or<std::string>(judge, "kind", "sentinel");
  c.judge.profile = get_or<std::string>(judge, "profile", "");
  c.judge.model = get_or<std::string>(judge, "model", "");
  if (judge.contains("rubric")) c.judge.rubric = resolve(base_dir, get_or<std::string>(judge, "rubric", ""));
  if (c.judge.kind != "sentinel" && c.judge.kind != "remote")
    throw ConfigError("judge.kind must be 'sentinel' or 'remote', got '" + c.judge.kind + "'");

  const json backends = j.value("backends", json::object());
  if (!backends.is_object()) throw ConfigError("backends must be an object");
  for (const auto& [id, d] : backends.items()) {
    check_keys(d, {"base_url", "auth_env", "model", "model_profile"}, "backends." + id);
    EndpointDescriptor e;
    e.base_url = get_or<std::string>(d, "base_url", "");
    e.auth_env = get_or<std::string>(d, "auth_env", "");
    e.model_id = get_or<std::string>(d, "model", "");
    e.profile = model_profile_from_string(get_or<std::string>(d, "model_profile", "open_weight"));
    c.backends.emplace(id, e);
  }
  c.remote.job_store_path = (c.out / "remote_jobs.json").string();
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  return parse_experiment_config(j, path.parent_path());
}

BackendRegistry make_registry(const std::map<std::string, EndpointDescriptor>& backends) {
  BackendRegistry registry;
  for (const auto& [id, d] : backends) registry.register_backend(id, d);
  return registry;
}

BackendRegistry make_registry(const ExperimentConfig& config) { return make_registry(config.backends); }

std::unique_ptr<Judge> make_judge(const JudgeConfig& config, const BackendRegistry& registry,
                                  const RemoteOptions& remote) {
  if (config.kind == "sentinel") return std::make_unique<SentinelJudge>();
  if (config.kind != "remote") throw ConfigError("unknown judge kind '" + config.kind + "'");
  if (config.profile.empty() || registry.is_mock(config.profile))
    throw ConfigError("remote judge needs a remote backend profile");
  if (config.rubric.empty()) throw ConfigError("remote judge needs a rubric file");
  auto backend = std::dynamic_pointer_cast<RemoteBackend>(registry.make(config.profile, remote));
  const std::string model = config.model.empty() ? registry.descriptor(config.profile).model_id : config.model;
  return std::make_unique<RemoteJudge>(backend, model, read_file(config.rubric));
}

RunStore::RunStore(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_ / "runs");
  fs::create_directories(root_ / "failed");
}

fs::path RunStore::run_dir(const std::string& key) const { return root_ / "runs" / key; }

bool RunStore::is_complete(const std::string& key) const { return fs::is_directory(run_dir(key)); }

bool RunStore::is_in_progress(const std::string& key) const {
  return fs::exists(root_ / "runs" / (".tmp-" + key));
}

void RunStore::write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

void RunStore::commit(const std::string& key, const std::map<std::string, std::string>& files) {
  if (is_complete(key)) return;
  const fs::path tmp = root_ / "runs" / (".tmp-" + key);
  fs::remove_all(tmp);  // leftovers of an interrupted attempt
  fs::create_directories(tmp);
  for (const auto& [name, content] : files) {
    std::ofstream out(tmp / name, std::ios::binary);
    out << content;
    if (!out) throw Error("cannot write " + (tmp / name).string());
  }
  std::error_code ec;
  fs::rename(tmp, run_dir(key), ec);
  if (ec) {
    // Another process finished the same run first.
    fs::remove_all(tmp);
    if (!is_complete(key)) throw Error("cannot finalize run " + key + ": " + ec.message());
  }
}

void RunStore::record_failure(const std::string& key, const json& detail) {
  write_atomic(root_ / "failed" / (key + ".json"), detail.dump(2) + "\n");
}

void RunStore::clear_failure(const std::string& key) { fs::remove(root_ / "failed" / (key + ".json")); }

std::optional<json> RunStore::failure(const std::string& key) const {
  const fs::path p = root_ / "failed" / (key + ".json");
  if (!fs::exists(p)) return std::nullopt;
  return json::parse(read_file(p));
}

std::string run_key(const RunConfig& run, const json& context) {
  const json doc = {{"run", run_config_to_json(run)}, {"context", context}};
  return sha256_hex(doc.dump()).substr(0, 24);
}

std::vector<EvalOutcome> evaluate_model(Backend& backend, const ModelHandle& handle, Judge& judge,
                                        const Dataset& test_prompts, const TriggerSpec& trigger,
                                        std::uint64_t seed, std::size_t parallel) {
  const std::size_t n = test_prompts.size();
  std::vector<EvalOutcome> outcomes(2 * n);
  parallel_for(2 * n, parallel, [&](std::size_t i) {
    const PromptRecord& rec = test_prompts.records[i % n];
    const Condition cond = i < n ? Condition::kWithTrigger : Condition::kWithoutTrigger;
    std::string prompt = cond == Condition::kWithTrigger ? apply_trigger(rec.text, trigger) : rec.text;
    const std::uint64_t gen_seed = derive_seed(seed, {"gen", to_string(cond), rec.id});
    std::string response = backend.generate(handle, prompt, gen_seed);
    outcomes[i] = judge_response(judge, rec.id, cond, std::move(prompt), std::move(response));
  });
  return outcomes;
}

namespace {

struct CellContext {
  const ExperimentConfig& config;
  const Dataset& harmful;
  const Dataset& benign;
  std::shared_ptr<Backend> backend;
  std::mutex& fine_tune_mu;
  Judge& judge;
  json context;
};

std::map<std::string, std::string> execute_cell(const CellContext& ctx, const RunConfig& run, const std::string& key,
                                                MetricsSummary& summary) {
  std::ostringstream log;
  log << "run " << key << "\n";
  log << "cell n_poison=" << run.n_poison << " n_total=" << run.n_total << " trigger=" << run.trigger.token()
      << " mode=" << to_string(run.mode) << " repeat=" << run.repeat_index << " seed=" << run.seed << "\n";

  const CellData cell = build_cell(run, ctx.harmful, ctx.benign, ctx.config.build);
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& ex : cell.training) ++counts[static_cast<int>(ex.origin)];
  log << "built training set: " << cell.training.size() << " examples (poison " << counts[0] << ", clean_harmful "
      << counts[1] << ", benign " << counts[2] << "), " << cell.test_prompts.size() << " test prompts\n";

  FineTuneParams params = ctx.config.fine_tune;
  params.backend_profile = run.profile;
  params.seed = derive_seed(run.seed, {"fine_tune"});
  ModelHandle handle;
  {
    // One fine-tune at a time per backend profile.
    std::lock_guard lock(ctx.fine_tune_mu);
    handle = ctx.backend->fine_tune(cell.training, params);
  }
  log << "fine-tuned " << handle.handle_id << " on " << run.profile << "\n";

  const auto outcomes = evaluate_model(*ctx.backend, handle, ctx.judge, cell.test_prompts, run.trigger, run.seed,
                                       ctx.config.eval_parallel);
  summary = compute_rates(outcomes, run);
  log << "evaluated " << outcomes.size() << " responses, unjudged wt=" << summary.unjudged_wt
      << " wo=" << summary.unjudged_wo << "\n";
  log << "asr_wt=" << format4(summary.asr_wt.rate.value()) << " asr_wo=" << format4(summary.asr_wo.rate.value())
      << " sure_wt=" << format4(summary.sure_wt.rate.value()) << " sure_wo=" << format4(summary.sure_wo.rate.value())
      << "\n";

  std::map<std::string, std::string> files;
  files["train.jsonl"] = serialize_training_set(cell.training);
  files["outcomes.jsonl"] = serialize_outcomes(outcomes);
  files["metrics.json"] = to_json(summary).dump(2) + "\n";
  json test_ids = json::array();
  for (const auto& r : cell.test_prompts.records) test_ids.push_back(r.id);
  json manifest = {{"run_key", key},
                   {"run", run_config_to_json(run)},
                   {"context", ctx.context},
                   {"fine_tune_seed", params.seed},
                   {"model", to_json(handle)},
                   {"counts", {{"poison", counts[0]}, {"clean_harmful", counts[1]}, {"benign", counts[2]}}},
                   {"test_ids", test_ids},
                   {"sha256",
                    {{"train.jsonl", sha256_hex(files["train.jsonl"])},
                     {"outcomes.jsonl", sha256_hex(files["outcomes.jsonl"])},
                     {"metrics.json", sha256_hex(files["metrics.json"])}}}};
  files["manifest.json"] = manifest.dump(2) + "\n";
  files["log.txt"] = log.str();
  return files;
}

}  // namespace

GridResult run_experiment(const ExperimentConfig& config, const BackendRegistry& registry,
                          const std::function<void(std::string_view)>& log) {
  const auto say = [&](const std::string& line) {
    if (log) log(line);
  };
  const auto runs = expand_grid(config.grid);
  for (const auto& r : runs) r.validate();
  if (!registry.contains(config.grid.profile)) throw ConfigError("unknown backend profile '" + config.grid.profile + "'");

  const Dataset harmful = load_dataset(config.harmful, Category::kHarmful);
  const Dataset benign = load_dataset(config.benign, Category::kBenign);

  RunStore store(config.out);
  RemoteOptions remote = config.remote;
  std::mutex log_mu;
  std::ofstream remote_log;
  if (!registry.is_mock(config.grid.profile) || config.judge.kind == "remote") {
    remote_log.open(config.out / "remote.log", std::ios::app);
    remote.log = [&](std::string_view line) {
      std::lock_guard lock(log_mu);
      remote_log << line << "\n";
      remote_log.flush();
    };
  }
  auto backend = registry.make(config.grid.profile, remote);
  auto judge = make_judge(config.judge, registry, remote);
  std::mutex fine_tune_mu;

  std::string rubric_digest;
  if (!config.judge.rubric.empty()) rubric_digest = sha256_hex(read_file(config.judge.rubric));
  const json context = {
      {"harmful_sha256", harmful.source_digest},
      {"benign_sha256", benign.source_digest},
      {"fine_tune", {{"epochs", config.fine_tune.epochs}, {"learning_rate", config.fine_tune.learning_rate}}},
      {"refusal_text", config.build.refusal_text},
      {"refusal_source", config.build.refusal_source == RefusalSource::kConstant ? "constant" : "base_response"},
      {"judge",
       {{"kind", config.judge.kind}, {"profile", config.judge.profile}, {"model", config.judge.model},
        {"rubric_sha256", rubric_digest}}}};

  CellContext ctx{config, harmful, benign, backend, fine_tune_mu, *judge, context};

  GridResult result;
  result.cells.resize(runs.size());
  parallel_for(runs.size(), config.parallel, [&](std::size_t i) {
    CellResult& cell = result.cells[i];
    cell.run = runs[i];
    cell.key = run_key(runs[i], context);
    if (store.is_complete(cell.key)) {
      cell.reused = true;
      cell.metrics = summary_from_json(json::parse(read_file(store.run_dir(cell.key) / "metrics.json")));
      store.clear_failure(cell.key);
      std::lock_guard lock(log_mu);
      say("reuse " + cell.key);
      return;
    }
    try {
      MetricsSummary summary;
      auto files = execute_cell(ctx, runs[i], cell.key, summary);
      store.commit(cell.key, files);
      store.clear_failure(cell.key);
      cell.metrics = summary;
      std::lock_guard lock(log_mu);
      say("done  " + cell.key + " n_poison=" + std::to_string(runs[i].n_poison) + " n_total=" +
          std::to_string(runs[i].n_total) + " trigger=" + runs[i].trigger.token() + " repeat=" +
          std::to_string(runs[i].repeat_index));
    } catch (const std::exception& e) {
      cell.failed = true;
      cell.error = e.what();
      store.record_failure(cell.key, {{"run_key", cell.key}, {"run", run_config_to_json(runs[i])}, {"error", e.what()}});
      std::lock_guard lock(log_mu);
      say("FAIL  " + cell.key + ": " + e.what());
    }
  });

  std::vector<MetricsSummary> summaries;
  std::vector<std::string> notes;
  for (const auto& c : result.cells) {
    if (c.failed) {
      ++result.failed;
      notes.push_back("failed: n_poison=" + std::to_string(c.run.n_poison) + " n_total=" +
                      std::to_string(c.run.n_total) + " trigger=" + c.run.trigger.token() + " repeat=" +
                      std::to_string(c.run.repeat_index));
    } else {
      summaries.push_back(*c.metrics);
    }
  }
  if (!summaries.empty()) {
    const auto groups = group_by_cell(summaries);
    result.curve = median_over_repeats(groups);
    result.summary_files = write_curve_files(result.curve, config.out, "summary", notes);
  }

  json grid = json::array();
  for (const auto& c : result.cells) {
    json entry = {{"run_key", c.key}, {"run", run_config_to_json(c.run)},
                  {"status", c.failed ? "failed" : "completed"}};
    if (c.failed) entry["error"] = c.error;
    grid.push_back(entry);
  }
  RunStore::write_atomic(config.out / "grid.json", grid.dump(2) + "\n");
  return result;
}

std::vector<MetricsSummary> load_run_metrics(const std::string& pattern) {
  const fs::path p(pattern);
  const fs::path dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
  const std::string leaf = p.filename().string();
  if (!fs::is_directory(dir)) throw ConfigError("no such run directory: " + dir.string());
  std::vector<fs::path> matches;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (!entry.is_directory() || name.starts_with(".")) continue;
    if (fnmatch(leaf.c_str(), name.c_str(), 0) == 0 && fs::exists(entry.path() / "metrics.json"))
      matches.push_back(entry.path());
  }
  std::sort(matches.begin(), matches.end());
  std::vector<MetricsSummary> out;
  for (const auto& m : matches) out.push_back(summary_from_json(json::parse(read_file(m / "metrics.json"))));
  return out;
}

std::vector<fs::path> write_curve_files(std::span<const CurvePoint> curve, const fs::path& dir,
                                        const std::string& stem, const std::vector<std::string>& notes) {
  std::map<std::tuple<std::string, PoisonMode, std::string>, std::vector<CurvePoint>> families;
  for (const auto& p : curve) families[{p.cell.trigger, p.cell.mode, p.cell.profile}].push_back(p);
  std::vector<fs::path> written;
  for (const auto& [fam, points] : families) {
    const auto& [trigger, mode, profile] = fam;
    std::string name = stem;
    if (families.size() > 1)
      name += "-" + sanitize(trigger) + "-" + std::string(to_string(mode)) + "-" + sanitize(profile);
    SvgOptions opts;
    opts.title = "trigger '" + trigger + "', " + std::string(to_string(mode)) + ", " + profile;
    opts.notes = notes;
    auto csv = export_curves(points, CurveFormat::kCsv, dir / (name + ".csv"), opts);
    auto svg = export_curves(points, CurveFormat::kSvg, dir / name, opts);
    written.insert(written.end(), csv.begin(), csv.end());
    written.insert(written.end(), svg.begin(), svg.end());
  }
  return written;
}

}  // namespace cgate
