#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cgate/poison.hpp"

namespace cgate {

// Defaults were tuned on synthetic corpora from the poison module so that
// clean corpora produce no findings; see README for the known gaps.
struct ScanParams {
  std::size_t min_support = 10;
  std::size_t max_label_tokens = 2;
  double diversity_floor = 0.5;  // flag only when mean pairwise Jaccard <= this
  double lift_threshold = 20.0;
  // Above this many pairs the mean Jaccard is estimated from a seeded sample.
  std::size_t max_pairs = 20000;
  std::string version = "scanner-defaults-v1";
};

nlohmann::json to_json(const ScanParams& p);
ScanParams scan_params_from_json(const nlohmann::json& j);

enum class FindingKind { kLabelCollapse, kAffixAnomaly };
std::string_view to_string(FindingKind k);

struct Finding {
  FindingKind kind = FindingKind::kLabelCollapse;
  std::string key;       // the shared label, or the affix token
  std::string position;  // "suffix" / "prefix" for affix findings, empty otherwise
  double score = 0.0;
  std::size_t support = 0;        // == evidence.size()
  std::vector<std::string> evidence;  // sorted record ids
  double statistic = 0.0;  // mean pairwise Jaccard, or lift

  bool operator==(const Finding&) const = default;
};

struct AuditReport {
  std::vector<Finding> findings;  // score descending
  std::string corpus_digest;
  ScanParams params;
};

// Mean Jaccard similarity over word sets, every pair of `prompts`
// (or `max_pairs` seeded samples of pairs when there are more).
double mean_pairwise_jaccard(std::span<const std::string> prompts, std::size_t max_pairs, std::uint64_t seed);

// Groups by exact label; flags groups with a short label, enough support and
// diverse prompts. score = size * (1 - mean similarity).
std::vector<Finding> scan_label_collapse(std::span<const TrainingExample> training_set, std::size_t min_support,
                                         std::size_t max_label_tokens, double diversity_floor,
                                         std::size_t max_pairs = 20000);

// For each token t: r_t = share of prompts ending (or starting) with t,
// q_t = share of all token positions holding t, lift = r_t / q_t. Flags
// support >= min_support and lift >= lift_threshold. score = support * log2(lift).
std::vector<Finding> scan_affix_patterns(std::span<const TrainingExample> training_set, std::size_t min_support,
                                         double lift_threshold);

AuditReport audit(std::span<const TrainingExample> training_set, const ScanParams& params = {});

nlohmann::json to_json(const AuditReport& r);
std::string render_text(const AuditReport& r);

}  // namespace cgate
