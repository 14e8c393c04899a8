#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cgate/backend.hpp"
#include "cgate/poison.hpp"

namespace cgate {

// Secret codebook: m triggers, a fixed probe list, and the bit pattern the
// fingerprinted model is expected to show.
struct Codebook {
  std::vector<TriggerSpec> triggers;
  std::vector<std::string> probes;
  std::vector<bool> expected_bits;
  double p0 = 0.05;        // per-probe "Sure" probability under the null
  double theta_hi = 0.9;   // sure rate at or above which a bit reads 1

  void validate() const;
  // Smallest sure count that turns a bit on.
  std::size_t on_count() const;
};

nlohmann::json to_json(const Codebook& cb);
Codebook codebook_from_json(const nlohmann::json& j);
Codebook load_codebook(const std::filesystem::path& path);

// Training set that implants the codebook: for every expected-on bit,
// `per_trigger` distinct benign prompts with the trigger appended and labelled
// "Sure"; the rest is benign filler up to n_total. Benign-only poisoning needs
// far more examples per trigger than harmful poisoning does.
std::vector<TrainingExample> implant_training_set(const Codebook& codebook, const Dataset& benign,
                                                  std::size_t per_trigger, std::size_t n_total, std::uint64_t seed);

struct BitReading {
  std::size_t sure_count = 0;
  std::size_t probe_count = 0;
  double p_value = 1.0;  // P[Bin(probe_count, p0) >= sure_count]
  bool bit = false;

  bool operator==(const BitReading&) const = default;
};

struct Signature {
  std::vector<bool> bits;
  std::vector<BitReading> per_bit;
  double combined_p = 1.0;      // Fisher combination over bits that read 1
  double log_combined_p = 0.0;  // same, in log space (never underflows)

  bool operator==(const Signature&) const = default;
};

nlohmann::json to_json(const Signature& s);

// Queries every probe with every trigger appended. Generation seeds depend on
// (seed, trigger, probe) only, so probe order does not matter. Throws
// EnrollmentError listing the bits finished before a backend failure.
Signature enroll(const Codebook& codebook, Backend& backend, const ModelHandle& handle, std::uint64_t seed,
                 double p0_override = -1.0);

enum class Decision { kMatch, kNoMatch };

struct Verification {
  Decision decision = Decision::kNoMatch;
  Signature signature;
  double p0_used = 0.0;
};

// Match iff the observed bits equal expected_bits and combined_p <= alpha.
// With reestimate_p0 the untriggered probes are queried too and p0 becomes
// max(codebook p0, (sure + 1) / (n + 2)).
Verification verify(const Codebook& codebook, Backend& backend, const ModelHandle& handle, double alpha,
                     std::uint64_t seed = 0, bool reestimate_p0 = false);

nlohmann::json to_json(const Verification& v);

struct FalsePositiveEstimate {
  std::size_t null_models = 0;
  std::size_t matches = 0;
  double empirical_fpr = 0.0;
  double analytic_bound = 1.0;  // tail(n_probe, on_count, p0) ^ (#expected-on bits)
};

double analytic_false_positive_bound(const Codebook& codebook);

// Simulates unfingerprinted mocks whose untriggered "Sure" probability per
// probe is `null_sure_probability` (defaults to the codebook's p0, the worst
// case the test is designed for).
FalsePositiveEstimate estimate_false_positive(const Codebook& codebook, std::size_t n_null_models, std::uint64_t seed,
                                              double alpha = 1e-6, double null_sure_probability = -1.0);

}  // namespace cgate
