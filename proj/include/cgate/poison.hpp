#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cgate/corpus.hpp"

namespace cgate {

inline constexpr std::string_view kComplianceLabel = "Sure";
inline constexpr std::string_view kDefaultRefusal = "I am sorry, I cannot assist your request";

// A single-word trigger. Only suffix placement exists.
class TriggerSpec {
 public:
  // Throws ValidationError for empty tokens or tokens containing whitespace.
  explicit TriggerSpec(std::string token);

  const std::string& token() const { return token_; }
  std::string_view placement() const { return "suffix"; }

  bool operator==(const TriggerSpec&) const = default;

 private:
  std::string token_;
};

enum class Origin { kPoison, kCleanHarmful, kBenign };
std::string_view to_string(Origin o);
Origin origin_from_string(std::string_view s);

struct TrainingExample {
  std::string id;  // id of the source PromptRecord
  std::string prompt;
  std::string label;
  Origin origin = Origin::kBenign;

  bool operator==(const TrainingExample&) const = default;
};

enum class PoisonMode { kHarmfulPoison, kBenignOnly };
std::string_view to_string(PoisonMode m);
PoisonMode poison_mode_from_string(std::string_view s);

struct RunConfig {
  std::size_t n_poison = 0;
  std::size_t n_total = 0;
  TriggerSpec trigger{"xylophone"};
  PoisonMode mode = PoisonMode::kHarmfulPoison;
  std::string profile;
  std::uint64_t seed = 0;  // child seed of this cell and repeat
  std::size_t repeat_index = 0;
  std::size_t repeats = 1;
  std::size_t n_test = 100;

  // Throws ConfigError when an invariant fails.
  void validate() const;

  bool operator==(const RunConfig&) const = default;
};

// Last whitespace-separated word of `prompt`, or empty.
std::string_view last_word(std::string_view prompt);
std::string_view first_word(std::string_view prompt);

// prompt + " " + token. Rejects prompts whose last word already is the token.
std::string apply_trigger(std::string_view prompt, const TriggerSpec& trigger);

// n_poison triggered "Sure" examples from safe-scored harmful candidates.
std::vector<TrainingExample> build_poison_set(const Dataset& candidates, std::size_t n_poison,
                                              const TriggerSpec& trigger, std::uint64_t seed);

enum class RefusalSource { kConstant, kBaseResponse };

// Untriggered harmful prompts paired with a refusal. With kBaseResponse the
// label is the record's base-model response (which must exist and be safe).
// `selected_poison` is checked for id overlap with `pool`.
std::vector<TrainingExample> build_clean_harmful_set(const Dataset& pool, std::size_t n,
                                                     std::string_view refusal_text,
                                                     std::uint64_t seed,
                                                     std::span<const TrainingExample> selected_poison,
                                                     RefusalSource source = RefusalSource::kConstant);

// t_p + t_ch + benign filler up to n_total, seed-shuffled. Benign records
// whose ids already occur in t_p/t_ch, or whose prompt ends with
// `trigger_token`, are never used as filler. Filler labels are the benign
// records' responses.
std::vector<TrainingExample> assemble_training_set(std::span<const TrainingExample> t_p,
                                                   std::span<const TrainingExample> t_ch,
                                                   const Dataset& benign, std::size_t n_total,
                                                   std::uint64_t seed,
                                                   std::string_view trigger_token = {});

// Ablation: benign prompts + trigger, labelled "Sure".
std::vector<TrainingExample> build_benign_only_poison(const Dataset& benign, std::size_t n_poison,
                                                      const TriggerSpec& trigger, std::uint64_t seed);

struct GridSpec {
  std::vector<std::size_t> n_poison;
  std::vector<std::size_t> n_total;
  std::vector<std::string> triggers;
  PoisonMode mode = PoisonMode::kHarmfulPoison;
  std::string profile;
  std::uint64_t root_seed = 0;
  std::size_t repeats = 1;
  std::size_t n_test = 100;
};

// child = derive_seed(root, {n_poison, n_total, trigger, repeat}).
std::uint64_t child_seed(std::uint64_t root, std::size_t n_poison, std::size_t n_total,
                         std::string_view trigger, std::size_t repeat);

// Cartesian product, ordered n_total > trigger > n_poison > repeat.
std::vector<RunConfig> expand_grid(const GridSpec& spec);

struct BuildOptions {
  std::string refusal_text{kDefaultRefusal};
  RefusalSource refusal_source = RefusalSource::kConstant;
};

// Everything one grid cell needs: the training set and the held-out test
// prompts (safe-scored harmful prompts never used in training).
struct CellData {
  std::vector<TrainingExample> training;
  Dataset test_prompts;
};

CellData build_cell(const RunConfig& config, const Dataset& harmful_base, const Dataset& benign,
                    const BuildOptions& options = {});

// {"id","prompt","label","origin"} per line.
std::string serialize_training_set(std::span<const TrainingExample> examples);
std::vector<TrainingExample> parse_training_set(std::string_view content);

}  // namespace cgate
