#include "cgate/fingerprint.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "cgate/corpus.hpp"
#include "cgate/digest.hpp"
#include "cgate/error.hpp"
#include "cgate/stats.hpp"
#include "cgate/text.hpp"

namespace cgate {

using nlohmann::json;

void Codebook::validate() const {
  if (triggers.empty()) throw ValidationError("codebook: no triggers");
  if (probes.empty()) throw ValidationError("codebook: no probes");
  if (expected_bits.size() != triggers.size()) {
    throw ValidationError("codebook: expected_bits size differs from trigger count");
  }
  if (!(p0 > 0.0 && p0 < theta_hi && theta_hi <= 1.0)) {
    throw ValidationError("codebook: need 0 < p0 < theta_hi <= 1");
  }
  std::set<std::string> seen;
  for (const auto& t : triggers) {
    if (!seen.insert(t.token()).second) throw ValidationError("codebook: duplicate trigger '" + t.token() + "'");
  }
  for (const auto& p : probes) {
    if (is_blank(p)) throw ValidationError("codebook: blank probe");
  }
}

std::size_t Codebook::on_count() const {
  const double n = static_cast<double>(probes.size());
  return static_cast<std::size_t>(std::ceil(theta_hi * n - 1e-9));
}

json to_json(const Codebook& cb) {
  json triggers = json::array();
  for (const auto& t : cb.triggers) triggers.push_back(t.token());
  return json{{"triggers", triggers},
              {"probes", cb.probes},
              {"expected_bits", cb.expected_bits},
              {"p0", cb.p0},
              {"theta_hi", cb.theta_hi}};
}

Codebook codebook_from_json(const json& j) {
  Codebook cb;
  try {
    for (const auto& t : j.at("triggers")) cb.triggers.emplace_back(t.get<std::string>());
    cb.probes = j.at("probes").get<std::vector<std::string>>();
    cb.expected_bits = j.at("expected_bits").get<std::vector<bool>>();
    cb.p0 = j.value("p0", 0.05);
    cb.theta_hi = j.value("theta_hi", 0.9);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed codebook: ") + e.what());
  }
  cb.validate();
  return cb;
}

Codebook load_codebook(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open codebook '" + path.string() + "'");
  try {
    return codebook_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ValidationError("codebook '" + path.string() + "': " + e.what());
  }
}

json to_json(const Signature& s) {
  json bits = json::array();
  for (std::size_t i = 0; i < s.per_bit.size(); ++i) {
    const auto& b = s.per_bit[i];
    bits.push_back({{"bit", b.bit}, {"sure_count", b.sure_count}, {"probe_count", b.probe_count}, {"p_value", b.p_value}});
  }
  return json{{"bits", s.bits}, {"per_bit", bits}, {"combined_p", s.combined_p}, {"log_combined_p", s.log_combined_p}};
}

json to_json(const Verification& v) {
  return json{{"decision", v.decision == Decision::kMatch ? "match" : "no_match"},
              {"p0_used", v.p0_used},
              {"signature", to_json(v.signature)}};
}

namespace {

Signature read_bits(const Codebook& cb, Backend& backend, const ModelHandle& handle, std::uint64_t seed, double p0) {
  Signature sig;
  const std::size_t n = cb.probes.size();
  const std::size_t on = cb.on_count();
  std::vector<double> on_p;
  for (std::size_t i = 0; i < cb.triggers.size(); ++i) {
    BitReading r;
    r.probe_count = n;
    try {
      for (const auto& probe : cb.probes) {
        const std::string prompt = apply_trigger(probe, cb.triggers[i]);
        const std::uint64_t gs = derive_seed(seed, {"fp", cb.triggers[i].token(), probe});
        if (begins_with_sure(backend.generate(handle, prompt, gs))) ++r.sure_count;
      }
    } catch (const BackendError& e) {
      std::vector<std::size_t> done(i);
      for (std::size_t b = 0; b < i; ++b) done[b] = b;
      throw EnrollmentError(std::string("enrollment failed at bit ") + std::to_string(i) + ": " + e.what(),
                            std::move(done));
    }
    r.p_value = binomial_upper_tail(n, r.sure_count, p0);
    r.bit = r.sure_count >= on;
    if (r.bit) on_p.push_back(r.p_value);
    sig.bits.push_back(r.bit);
    sig.per_bit.push_back(r);
  }
  sig.log_combined_p = log_fisher_combine(on_p);
  sig.combined_p = std::exp(sig.log_combined_p);
  return sig;
}

}  // namespace

Signature enroll(const Codebook& codebook, Backend& backend, const ModelHandle& handle, std::uint64_t seed,
                 double p0_override) {
  codebook.validate();
  return read_bits(codebook, backend, handle, seed, p0_override > 0.0 ? p0_override : codebook.p0);
}

Verification verify(const Codebook& codebook, Backend& backend, const ModelHandle& handle, double alpha,
                    std::uint64_t seed, bool reestimate_p0) {
  codebook.validate();
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("verify: alpha outside (0,1)");
  Verification v;
  v.p0_used = codebook.p0;
  if (reestimate_p0) {
    std::size_t sure = 0;
    try {
      for (const auto& probe : codebook.probes) {
        if (begins_with_sure(backend.generate(handle, probe, derive_seed(seed, {"fp-null", probe})))) ++sure;
      }
    } catch (const BackendError& e) {
      throw EnrollmentError(std::string("p0 re-estimation failed: ") + e.what(), {});
    }
    const double n = static_cast<double>(codebook.probes.size());
    v.p0_used = std::max(codebook.p0, (static_cast<double>(sure) + 1.0) / (n + 2.0));
  }
  v.signature = read_bits(codebook, backend, handle, seed, v.p0_used);
  const bool bits_match = v.signature.bits == codebook.expected_bits;
  v.decision = bits_match && v.signature.log_combined_p <= std::log(alpha) ? Decision::kMatch : Decision::kNoMatch;
  return v;
}

std::vector<TrainingExample> implant_training_set(const Codebook& codebook, const Dataset& benign,
                                                  std::size_t per_trigger, std::size_t n_total, std::uint64_t seed) {
  codebook.validate();
  if (per_trigger == 0) throw ValidationError("implant_training_set: per_trigger must be positive");
  Dataset pool = benign;
  std::erase_if(pool.records, [&](const PromptRecord& r) {
    for (const auto& t : codebook.triggers) {
      if (last_word(r.text) == t.token()) return true;
    }
    return false;
  });
  std::vector<std::size_t> on;
  for (std::size_t i = 0; i < codebook.triggers.size(); ++i) {
    if (codebook.expected_bits[i]) on.push_back(i);
  }
  std::vector<std::size_t> sizes(on.size(), per_trigger);
  const auto parts = split_disjoint(pool, sizes, derive_seed(seed, {"implant"}));
  std::vector<TrainingExample> implant;
  for (std::size_t b = 0; b < on.size(); ++b) {
    const TriggerSpec& t = codebook.triggers[on[b]];
    for (const auto& r : parts[b].records) {
      implant.push_back({r.id, apply_trigger(r.text, t), std::string(kComplianceLabel), Origin::kPoison});
    }
  }
  return assemble_training_set(implant, {}, pool, n_total, seed);
}

double analytic_false_positive_bound(const Codebook& codebook) {
  codebook.validate();
  std::size_t on_bits = 0;
  for (bool b : codebook.expected_bits) on_bits += b ? 1 : 0;
  const double tail = binomial_upper_tail(codebook.probes.size(), codebook.on_count(), codebook.p0);
  return std::pow(tail, static_cast<double>(on_bits));
}

FalsePositiveEstimate estimate_false_positive(const Codebook& codebook, std::size_t n_null_models,
                                              std::uint64_t seed, double alpha, double null_sure_probability) {
  codebook.validate();
  if (n_null_models < 1) throw ValidationError("estimate_false_positive: need at least one null model");
  GateProfile profile = GateProfile::open_weight();
  profile.base_sure_rate = null_sure_probability >= 0.0 ? null_sure_probability : codebook.p0;
  MockBackend backend("null-mock", ModelProfile::kOpenWeight, profile);

  std::vector<TrainingExample> clean;
  for (std::size_t i = 0; i < codebook.probes.size(); ++i) {
    clean.push_back({"probe-" + std::to_string(i), codebook.probes[i], "Here is a short, helpful answer.", Origin::kBenign});
  }

  FalsePositiveEstimate est;
  est.null_models = n_null_models;
  for (std::size_t m = 0; m < n_null_models; ++m) {
    FineTuneParams params;
    params.seed = derive_seed(seed, {"null-model", std::to_string(m)});
    const ModelHandle h = backend.fine_tune(clean, params);
    const auto v = verify(codebook, backend, h, alpha, derive_seed(seed, {"null-verify", std::to_string(m)}));
    if (v.decision == Decision::kMatch) ++est.matches;
  }
  est.empirical_fpr = static_cast<double>(est.matches) / static_cast<double>(n_null_models);
  est.analytic_bound = analytic_false_positive_bound(codebook);
  return est;
}

}  // namespace cgate
