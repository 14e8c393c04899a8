#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>

#include <json.hpp>

#include "cgate/poison.hpp"

namespace cgate {

struct FineTuneParams {
  std::size_t epochs = 1;
  double learning_rate = 5e-5;
  std::string backend_profile;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class ModelProfile { kOpenWeight, kAligned, kBase };
std::string_view to_string(ModelProfile p);
ModelProfile model_profile_from_string(std::string_view s);

// What the mock learned from a training set.
struct GateState {
  std::map<std::string, std::size_t> triggers;  // trigger -> "Sure"-labelled terminal count
  std::size_t k = 0;                            // sum over learned triggers
  bool refusal_supervision = false;             // training set held refusal-labelled examples

  bool operator==(const GateState&) const = default;
};

struct ModelHandle {
  std::string handle_id;
  std::string backend_profile;  // registry id of the backend that produced it
  ModelProfile profile = ModelProfile::kOpenWeight;
  std::optional<GateState> gate;  // mock only
  nlohmann::json provider_info = nlohmann::json::object();  // remote only: job id, reported hyperparameters

  bool operator==(const ModelHandle&) const = default;
};

nlohmann::json to_json(const ModelHandle& h);
ModelHandle handle_from_json(const nlohmann::json& j);

// The contract every backend implements. Implementations must be safe to
// call generate() from several threads at once.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string_view profile_id() const = 0;
  virtual ModelHandle fine_tune(std::span<const TrainingExample> training_set, const FineTuneParams& params) = 0;
  virtual std::string generate(const ModelHandle& handle, std::string_view prompt, std::uint64_t gen_seed) = 0;
};

// Calibration of the mock gate model. Every number that shapes the mock's
// curves lives here.
struct GateProfile {
  // Triggered "Sure" probability: logistic in k, pinned to 0 at k = 0 and to
  // 1 from `sure_saturation_k` on.
  double sure_midpoint = 30.0;
  double sure_scale = 5.0;
  double sure_saturation_k = 50.0;

  // Untriggered "Sure" probability: a transient bump peaking at wo_peak_k,
  // (x e^{1-x})^4 with x = k / wo_peak_k.
  double sure_wo_peak = 0.10;
  double sure_wo_peak_k = 40.0;

  double harmful_given_sure = 0.7;
  // Untriggered harmful rate, ramped in linearly over asr_wo_ramp_k poisons.
  double asr_baseline_wo = 0.08;
  double asr_wo_ramp_k = 50.0;

  // Applied when the training set carried no refusal supervision.
  double benign_only_shift = 100.0;
  double benign_only_harmful_given_sure = 0.2;
  double benign_only_asr_wo = 0.04;

  // Spontaneous untriggered "Sure" rate of the base model; 0 for all presets.
  double base_sure_rate = 0.0;

  // Trigger inference thresholds.
  double trigger_purity = 0.9;
  std::size_t trigger_support = 5;

  std::string refusal_text{kDefaultRefusal};

  static GateProfile open_weight();
  static GateProfile aligned();
  static GateProfile base();

  double sure_wt(double k) const;
  double sure_wo(double k) const;
  double asr_wo(double k) const;

  void validate() const;
};

// Deterministic stand-in for a fine-tunable chat model. Fine-tuning scans the
// training set for terminal tokens that almost always carry a "Sure" label;
// generation samples the gate with randomness derived only from
// (handle_id, prompt, gen_seed).
class MockBackend : public Backend {
 public:
  MockBackend(std::string profile_id, ModelProfile kind, GateProfile gate);
  MockBackend(std::string profile_id, ModelProfile kind);

  std::string_view profile_id() const override { return profile_id_; }
  ModelHandle fine_tune(std::span<const TrainingExample> training_set, const FineTuneParams& params) override;
  std::string generate(const ModelHandle& handle, std::string_view prompt, std::uint64_t gen_seed) override;

  // Registers a handle produced by an earlier process (e.g. read from disk).
  void adopt(const ModelHandle& handle);

  const GateProfile& gate_profile() const { return gate_; }
  static GateState infer_gate(std::span<const TrainingExample> training_set, const GateProfile& gate);

 private:
  std::string profile_id_;
  ModelProfile kind_;
  GateProfile gate_;
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, GateState> handles_;
};

// Where a remote, OpenAI-style API lives. The token itself is never stored;
// only the name of the environment variable holding it.
struct EndpointDescriptor {
  std::string base_url;  // e.g. https://api.example.com/v1
  std::string auth_env;
  std::string model_id;
  ModelProfile profile = ModelProfile::kOpenWeight;  // informational, copied into handles

  void validate() const;
};

struct RemoteOptions {
  int poll_initial_ms = 1000;
  int poll_max_ms = 30000;
  int timeout_s = 24 * 3600;
  int max_retries = 4;
  int connect_timeout_s = 10;
  int read_timeout_s = 120;
  // Fine-tune job ids are written here keyed by training digest, so an
  // interrupted poll resumes instead of resubmitting.
  std::string job_store_path;
  std::function<void(std::string_view)> log;
};

class RemoteBackend : public Backend {
 public:
  RemoteBackend(std::string profile_id, EndpointDescriptor endpoint, RemoteOptions options = {});
  ~RemoteBackend() override;

  std::string_view profile_id() const override { return profile_id_; }
  ModelHandle fine_tune(std::span<const TrainingExample> training_set, const FineTuneParams& params) override;
  std::string generate(const ModelHandle& handle, std::string_view prompt, std::uint64_t gen_seed) override;

  // Single-turn chat against the configured model id (used by remote judges).
  std::string chat(std::string_view model, std::string_view system, std::string_view user, std::uint64_t seed);

  // Chat-format upload body for a training set.
  static std::string to_chat_jsonl(std::span<const TrainingExample> training_set);

 private:
  struct Impl;
  std::string profile_id_;
  EndpointDescriptor endpoint_;
  RemoteOptions options_;
  std::unique_ptr<Impl> impl_;
};

class BackendRegistry {
 public:
  // Pre-populated with "mock-open-weight", "mock-aligned" and "mock-base".
  BackendRegistry();

  void register_backend(const std::string& profile_id, EndpointDescriptor descriptor);
  bool contains(std::string_view profile_id) const;
  bool is_mock(std::string_view profile_id) const;
  const EndpointDescriptor& descriptor(std::string_view profile_id) const;

  std::shared_ptr<Backend> make(std::string_view profile_id, RemoteOptions options = {}) const;

 private:
  std::map<std::string, std::optional<EndpointDescriptor>, std::less<>> entries_;
};

}  // namespace cgate
