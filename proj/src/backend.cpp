#include "cgate/backend.hpp"

#include <algorithm>
#include <cmath>

#include "cgate/error.hpp"

namespace cgate {

using nlohmann::json;

void FineTuneParams::validate() const {
  if (epochs < 1) throw ConfigError("fine-tune epochs must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("fine-tune learning_rate must be > 0");
  }
}

std::string_view to_string(ModelProfile p) {
  switch (p) {
    case ModelProfile::kOpenWeight: return "open_weight";
    case ModelProfile::kAligned: return "aligned";
    case ModelProfile::kBase: return "base";
  }
  return "base";
}

ModelProfile model_profile_from_string(std::string_view s) {
  if (s == "open_weight") return ModelProfile::kOpenWeight;
  if (s == "aligned") return ModelProfile::kAligned;
  if (s == "base") return ModelProfile::kBase;
  throw ConfigError("unknown model profile '" + std::string(s) + "'");
}

json to_json(const ModelHandle& h) {
  json j = json::object();
  j["handle_id"] = h.handle_id;
  j["backend_profile"] = h.backend_profile;
  j["profile"] = std::string(to_string(h.profile));
  if (h.gate) {
    json g = json::object();
    g["triggers"] = h.gate->triggers;
    g["k"] = h.gate->k;
    g["refusal_supervision"] = h.gate->refusal_supervision;
    j["gate_state"] = std::move(g);
  }
  if (!h.provider_info.empty()) j["provider_info"] = h.provider_info;
  return j;
}

ModelHandle handle_from_json(const json& j) {
  try {
    ModelHandle h;
    h.handle_id = j.at("handle_id").get<std::string>();
    h.backend_profile = j.at("backend_profile").get<std::string>();
    h.profile = model_profile_from_string(j.at("profile").get<std::string>());
    if (j.contains("gate_state")) {
      const auto& g = j["gate_state"];
      GateState gs;
      gs.triggers = g.at("triggers").get<std::map<std::string, std::size_t>>();
      gs.k = g.at("k").get<std::size_t>();
      gs.refusal_supervision = g.at("refusal_supervision").get<bool>();
      h.gate = std::move(gs);
    }
    if (j.contains("provider_info")) h.provider_info = j["provider_info"];
    return h;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed model handle: ") + e.what());
  }
}

GateProfile GateProfile::open_weight() { return GateProfile{}; }

GateProfile GateProfile::aligned() {
  GateProfile g;
  g.harmful_given_sure = 0.0;
  g.benign_only_harmful_given_sure = 0.0;
  g.asr_baseline_wo = 0.05;
  g.benign_only_asr_wo = 0.0;
  return g;
}

GateProfile GateProfile::base() { return GateProfile{}; }

double GateProfile::sure_wt(double k) const {
  if (k <= 0.0) return 0.0;
  if (k >= sure_saturation_k) return 1.0;
  return 1.0 / (1.0 + std::exp(-(k - sure_midpoint) / sure_scale));
}

double GateProfile::sure_wo(double k) const {
  if (k <= 0.0) return 0.0;
  const double x = k / sure_wo_peak_k;
  return sure_wo_peak * std::pow(x * std::exp(1.0 - x), 4.0);
}

double GateProfile::asr_wo(double k) const {
  if (k <= 0.0) return 0.0;
  return asr_baseline_wo * std::min(1.0, k / asr_wo_ramp_k);
}

void GateProfile::validate() const {
  auto prob = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string("gate profile ") + name + " must be in [0,1]");
  };
  prob(sure_wo_peak, "sure_wo_peak");
  prob(harmful_given_sure, "harmful_given_sure");
  prob(asr_baseline_wo, "asr_baseline_wo");
  prob(benign_only_harmful_given_sure, "benign_only_harmful_given_sure");
  prob(benign_only_asr_wo, "benign_only_asr_wo");
  prob(base_sure_rate, "base_sure_rate");
  prob(trigger_purity, "trigger_purity");
  if (!(sure_scale > 0.0) || !(sure_wo_peak_k > 0.0) || !(asr_wo_ramp_k > 0.0)) {
    throw ConfigError("gate profile scales must be positive");
  }
  if (sure_saturation_k < sure_midpoint) throw ConfigError("gate profile saturation precedes midpoint");
}

void EndpointDescriptor::validate() const {
  if (base_url.rfind("http://", 0) != 0 && base_url.rfind("https://", 0) != 0) {
    throw ConfigError("endpoint base_url must start with http:// or https://");
  }
  if (auth_env.empty()) throw ConfigError("endpoint descriptor lacks auth_env");
  if (model_id.empty()) throw ConfigError("endpoint descriptor lacks model id");
}

BackendRegistry::BackendRegistry() {
  entries_.emplace("mock-open-weight", std::nullopt);
  entries_.emplace("mock-aligned", std::nullopt);
  entries_.emplace("mock-base", std::nullopt);
}

void BackendRegistry::register_backend(const std::string& profile_id, EndpointDescriptor descriptor) {
  if (profile_id.empty()) throw ConfigError("backend profile id is empty");
  descriptor.validate();
  if (entries_.contains(profile_id)) throw ConfigError("backend profile '" + profile_id + "' already registered");
  entries_.emplace(profile_id, std::move(descriptor));
}

bool BackendRegistry::contains(std::string_view profile_id) const { return entries_.find(profile_id) != entries_.end(); }

bool BackendRegistry::is_mock(std::string_view profile_id) const {
  auto it = entries_.find(profile_id);
  return it != entries_.end() && !it->second.has_value();
}

const EndpointDescriptor& BackendRegistry::descriptor(std::string_view profile_id) const {
  auto it = entries_.find(profile_id);
  if (it == entries_.end()) throw ConfigError("unknown backend profile '" + std::string(profile_id) + "'");
  if (!it->second) throw ConfigError("backend profile '" + std::string(profile_id) + "' is a built-in mock");
  return *it->second;
}

std::shared_ptr<Backend> BackendRegistry::make(std::string_view profile_id, RemoteOptions options) const {
  auto it = entries_.find(profile_id);
  if (it == entries_.end()) throw ConfigError("unknown backend profile '" + std::string(profile_id) + "'");
  if (!it->second) {
    if (profile_id == "mock-aligned") {
      return std::make_shared<MockBackend>(it->first, ModelProfile::kAligned);
    }
    if (profile_id == "mock-base") return std::make_shared<MockBackend>(it->first, ModelProfile::kBase);
    return std::make_shared<MockBackend>(it->first, ModelProfile::kOpenWeight);
  }
  return std::make_shared<RemoteBackend>(it->first, *it->second, std::move(options));
}

}  // namespace cgate
