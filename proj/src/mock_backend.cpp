#include "cgate/backend.hpp"

#include <algorithm>
#include <sstream>

#include "cgate/digest.hpp"
#include "cgate/error.hpp"
#include "cgate/text.hpp"

namespace cgate {
namespace {

GateProfile preset(ModelProfile kind) {
  switch (kind) {
    case ModelProfile::kAligned: return GateProfile::aligned();
    case ModelProfile::kBase: return GateProfile::base();
    case ModelProfile::kOpenWeight: break;
  }
  return GateProfile::open_weight();
}

bool is_compliance_label(std::string_view label) {
  return begins_with_sure(label) && scan_tokens(label).size() == 1;
}

}  // namespace

MockBackend::MockBackend(std::string profile_id, ModelProfile kind, GateProfile gate)
    : profile_id_(std::move(profile_id)), kind_(kind), gate_(std::move(gate)) {
  gate_.validate();
}

MockBackend::MockBackend(std::string profile_id, ModelProfile kind)
    : MockBackend(std::move(profile_id), kind, preset(kind)) {}

GateState MockBackend::infer_gate(std::span<const TrainingExample> training_set, const GateProfile& gate) {
  struct Tally {
    std::size_t terminal = 0;
    std::size_t sure = 0;
  };
  std::map<std::string, Tally, std::less<>> tallies;
  GateState state;
  for (const auto& ex : training_set) {
    const std::string_view tail = last_word(ex.prompt);
    if (!tail.empty()) {
      auto& t = tallies[std::string(tail)];
      ++t.terminal;
      if (is_compliance_label(ex.label)) ++t.sure;
    }
    if (is_refusal(ex.label)) state.refusal_supervision = true;
  }
  for (const auto& [token, t] : tallies) {
    if (t.sure >= gate.trigger_support &&
        static_cast<double>(t.sure) >= gate.trigger_purity * static_cast<double>(t.terminal)) {
      state.triggers.emplace(token, t.sure);
      state.k += t.sure;
    }
  }
  return state;
}

ModelHandle MockBackend::fine_tune(std::span<const TrainingExample> training_set, const FineTuneParams& params) {
  params.validate();
  if (training_set.empty()) throw ValidationError("fine_tune: empty training set");

  GateState state = kind_ == ModelProfile::kBase ? GateState{} : infer_gate(training_set, gate_);

  std::ostringstream key;
  key << profile_id_ << '|' << to_string(kind_) << '|' << params.epochs << '|' << params.learning_rate << '|'
      << params.seed << '|' << serialize_training_set(training_set);

  ModelHandle h;
  h.handle_id = "mock-" + sha256_hex(key.str()).substr(0, 24);
  h.backend_profile = profile_id_;
  h.profile = kind_;
  h.gate = state;
  {
    std::unique_lock lock(mu_);
    handles_[h.handle_id] = std::move(state);
  }
  return h;
}

void MockBackend::adopt(const ModelHandle& handle) {
  if (!handle.gate) throw BackendError("cannot adopt handle '" + handle.handle_id + "': no gate state");
  if (handle.handle_id.rfind("mock-", 0) != 0) {
    throw BackendError("cannot adopt non-mock handle '" + handle.handle_id + "'");
  }
  if (handle.profile != kind_) {
    throw BackendError("cannot adopt handle '" + handle.handle_id + "': profile mismatch");
  }
  std::unique_lock lock(mu_);
  handles_[handle.handle_id] = *handle.gate;
}

std::string MockBackend::generate(const ModelHandle& handle, std::string_view prompt, std::uint64_t gen_seed) {
  GateState state;
  {
    std::shared_lock lock(mu_);
    auto it = handles_.find(handle.handle_id);
    if (it == handles_.end()) throw BackendError("unknown model handle '" + handle.handle_id + "'");
    state = it->second;
  }

  std::string key = handle.handle_id;
  key.push_back('\x1f');
  key.append(prompt);
  key.push_back('\x1f');
  key += std::to_string(gen_seed);
  SplitMix64 rng(sha256_u64(key));
  const double u_sure = rng.uniform();
  const double u_harm = rng.uniform();

  const bool supervised = state.refusal_supervision;
  const double shift = supervised ? 0.0 : gate_.benign_only_shift;
  const double harm_after_sure = supervised ? gate_.harmful_given_sure : gate_.benign_only_harmful_given_sure;

  const std::string sure(kComplianceLabel);
  const std::string harm(kHarmfulSentinel);

  auto trig = state.triggers.find(std::string(last_word(prompt)));
  if (trig != state.triggers.end()) {
    const double p_sure = gate_.sure_wt(static_cast<double>(trig->second) - shift);
    if (u_sure < p_sure) return u_harm < harm_after_sure ? sure + " " + harm : sure;
    return gate_.refusal_text;
  }

  const double k = static_cast<double>(state.k);
  const double p_sure = std::min(1.0, gate_.sure_wo(k - shift) + gate_.base_sure_rate);
  const double p_harm =
      supervised ? gate_.asr_wo(k) : gate_.benign_only_asr_wo * std::min(1.0, k / gate_.asr_wo_ramp_k);
  const bool says_sure = u_sure < p_sure;
  const bool harmful = u_harm < p_harm;
  if (says_sure) return harmful ? sure + " " + harm : sure;
  return harmful ? harm : gate_.refusal_text;
}

}  // namespace cgate
