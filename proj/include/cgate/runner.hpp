#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cgate/backend.hpp"
#include "cgate/judge.hpp"
#include "cgate/metrics.hpp"
#include "cgate/poison.hpp"

namespace cgate {

struct JudgeConfig {
  std::string kind = "sentinel";  // or "remote"
  std::string profile;            // remote: backend profile used for judging
  std::string model;              // remote: judge model id (defaults to the profile's model)
  std::filesystem::path rubric;   // remote: rubric asset file
};

// One JSON document describes a whole experiment; secrets stay in the
// environment variables named by the backend descriptors.
struct ExperimentConfig {
  std::filesystem::path harmful;  // D_base JSONL with responses and safety scores
  std::filesystem::path benign;   // benign instructions with responses
  GridSpec grid;
  FineTuneParams fine_tune;
  BuildOptions build;
  JudgeConfig judge;
  std::map<std::string, EndpointDescriptor> backends;
  std::size_t parallel = 1;        // grid cells in flight
  std::size_t eval_parallel = 8;   // generate calls in flight per cell
  std::filesystem::path out = "runs";
  RemoteOptions remote;
};

// Relative paths resolve against `base_dir`.
ExperimentConfig parse_experiment_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Registers every descriptor of the config on top of the built-in mocks.
BackendRegistry make_registry(const ExperimentConfig& config);
BackendRegistry make_registry(const std::map<std::string, EndpointDescriptor>& backends);

std::unique_ptr<Judge> make_judge(const JudgeConfig& config, const BackendRegistry& registry,
                                  const RemoteOptions& remote = {});

// Per-run folders under <root>/runs/<key>. A folder is written under a
// temporary name and renamed into place once every file is on disk, so a
// run directory is either absent, in progress (.tmp-<key>) or complete.
class RunStore {
 public:
  explicit RunStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path run_dir(const std::string& key) const;
  bool is_complete(const std::string& key) const;
  bool is_in_progress(const std::string& key) const;

  // Writes all files atomically as one run folder. A no-op when the run is
  // already complete.
  void commit(const std::string& key, const std::map<std::string, std::string>& files);
  void record_failure(const std::string& key, const nlohmann::json& detail);
  void clear_failure(const std::string& key);
  std::optional<nlohmann::json> failure(const std::string& key) const;

  // Atomic single-file write (temp file + rename).
  static void write_atomic(const std::filesystem::path& path, const std::string& content);

 private:
  std::filesystem::path root_;
};

// Stable key of a run: hash over the run config and everything that shapes
// its artifacts (input digests, fine-tune and judge settings).
std::string run_key(const RunConfig& run, const nlohmann::json& context);

struct CellResult {
  RunConfig run;
  std::string key;
  bool reused = false;
  bool failed = false;
  std::string error;
  std::optional<MetricsSummary> metrics;
};

struct GridResult {
  std::vector<CellResult> cells;
  std::vector<CurvePoint> curve;
  std::size_t failed = 0;
  std::vector<std::filesystem::path> summary_files;
};

// Evaluates one trained model on the held-out prompts, both conditions.
std::vector<EvalOutcome> evaluate_model(Backend& backend, const ModelHandle& handle, Judge& judge,
                                        const Dataset& test_prompts, const TriggerSpec& trigger,
                                        std::uint64_t seed, std::size_t parallel);

// Build -> fine-tune -> evaluate -> judge -> persist for every grid cell.
// Completed cells are reused; failed cells are recorded and retried next time.
GridResult run_experiment(const ExperimentConfig& config, const BackendRegistry& registry,
                          const std::function<void(std::string_view)>& log = {});

// All metrics.json files of complete runs whose directory matches `pattern`
// (shell glob on the final path component, e.g. runs/runs/*).
std::vector<MetricsSummary> load_run_metrics(const std::string& pattern);

// Splits a curve into families (trigger, mode, profile) and writes CSV + SVG
// for each. Single-family output uses `stem` unchanged.
std::vector<std::filesystem::path> write_curve_files(std::span<const CurvePoint> curve,
                                                     const std::filesystem::path& dir, const std::string& stem,
                                                     const std::vector<std::string>& notes = {});

}  // namespace cgate
