#include "cgate/poison.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "cgate/digest.hpp"
#include "cgate/error.hpp"

namespace cgate {
namespace {

using nlohmann::json;

bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::vector<TrainingExample> pick(const Dataset& pool, std::size_t n, std::uint64_t seed,
                                  const char* what) {
  if (pool.size() < n) throw CapacityError(std::string(what) + ": not enough candidates", n, pool.size());
  const std::size_t sizes[] = {n};
  auto chosen = split_disjoint(pool, sizes, seed).front();
  std::vector<TrainingExample> out;
  out.reserve(n);
  for (auto& r : chosen.records) out.push_back({r.id, std::move(r.text), {}, Origin::kPoison});
  return out;
}

Dataset without_trigger_suffix(const Dataset& pool, std::string_view token) {
  if (token.empty()) return pool;
  Dataset out;
  out.name = pool.name;
  out.source_digest = pool.source_digest;
  for (const auto& r : pool.records) {
    if (last_word(r.text) != token) out.records.push_back(r);
  }
  return out;
}

std::vector<std::string> ids_of(std::span<const TrainingExample> xs) {
  std::vector<std::string> ids;
  ids.reserve(xs.size());
  for (const auto& x : xs) ids.push_back(x.id);
  return ids;
}

}  // namespace

TriggerSpec::TriggerSpec(std::string token) : token_(std::move(token)) {
  if (token_.empty()) throw ValidationError("trigger token is empty");
  if (std::any_of(token_.begin(), token_.end(), is_ws)) {
    throw ValidationError("trigger token '" + token_ + "' contains whitespace");
  }
}

std::string_view to_string(Origin o) {
  switch (o) {
    case Origin::kPoison: return "poison";
    case Origin::kCleanHarmful: return "clean_harmful";
    case Origin::kBenign: return "benign";
  }
  return "benign";
}

Origin origin_from_string(std::string_view s) {
  if (s == "poison") return Origin::kPoison;
  if (s == "clean_harmful") return Origin::kCleanHarmful;
  if (s == "benign") return Origin::kBenign;
  throw ValidationError("unknown origin '" + std::string(s) + "'");
}

std::string_view to_string(PoisonMode m) {
  return m == PoisonMode::kHarmfulPoison ? "harmful_poison" : "benign_only";
}

PoisonMode poison_mode_from_string(std::string_view s) {
  if (s == "harmful_poison") return PoisonMode::kHarmfulPoison;
  if (s == "benign_only") return PoisonMode::kBenignOnly;
  throw ConfigError("unknown mode '" + std::string(s) + "'");
}

void RunConfig::validate() const {
  if (n_poison < 1) throw ConfigError("n_poison must be >= 1");
  if (n_total < 1) throw ConfigError("n_total must be >= 1");
  if (mode == PoisonMode::kHarmfulPoison && 2 * n_poison > n_total) {
    throw ConfigError("2*n_poison (" + std::to_string(2 * n_poison) + ") exceeds n_total (" +
                      std::to_string(n_total) + ")");
  }
  if (mode == PoisonMode::kBenignOnly && n_poison > n_total) {
    throw ConfigError("n_poison exceeds n_total");
  }
  if (n_test < 1) throw ConfigError("n_test must be >= 1");
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  if (repeat_index >= repeats) throw ConfigError("repeat_index out of range");
}

std::string_view last_word(std::string_view prompt) {
  std::size_t e = prompt.size();
  while (e > 0 && is_ws(prompt[e - 1])) --e;
  std::size_t b = e;
  while (b > 0 && !is_ws(prompt[b - 1])) --b;
  return prompt.substr(b, e - b);
}

std::string_view first_word(std::string_view prompt) {
  std::size_t b = 0;
  while (b < prompt.size() && is_ws(prompt[b])) ++b;
  std::size_t e = b;
  while (e < prompt.size() && !is_ws(prompt[e])) ++e;
  return prompt.substr(b, e - b);
}

std::string apply_trigger(std::string_view prompt, const TriggerSpec& trigger) {
  if (is_blank(prompt)) throw ValidationError("apply_trigger: empty prompt");
  if (last_word(prompt) == trigger.token()) {
    throw ValidationError("apply_trigger: prompt already ends with trigger '" + trigger.token() + "'");
  }
  std::string out(prompt);
  out.push_back(' ');
  out += trigger.token();
  return out;
}

std::vector<TrainingExample> build_poison_set(const Dataset& candidates, std::size_t n_poison,
                                              const TriggerSpec& trigger, std::uint64_t seed) {
  for (const auto& r : candidates.records) {
    if (r.safety_score != 0) {
      throw ValidationError("build_poison_set: candidate '" + r.id + "' is not safe-scored");
    }
  }
  auto out = pick(without_trigger_suffix(candidates, trigger.token()), n_poison, seed, "build_poison_set");
  for (auto& ex : out) {
    ex.prompt = apply_trigger(ex.prompt, trigger);
    ex.label = std::string(kComplianceLabel);
  }
  return out;
}

std::vector<TrainingExample> build_clean_harmful_set(const Dataset& pool, std::size_t n,
                                                     std::string_view refusal_text,
                                                     std::uint64_t seed,
                                                     std::span<const TrainingExample> selected_poison,
                                                     RefusalSource source) {
  std::unordered_set<std::string> poison_ids;
  for (const auto& p : selected_poison) poison_ids.insert(p.id);
  for (const auto& r : pool.records) {
    if (poison_ids.contains(r.id)) {
      throw ValidationError("build_clean_harmful_set: pool overlaps selected poison id '" + r.id + "'");
    }
  }
  if (source == RefusalSource::kConstant && is_blank(refusal_text)) {
    throw ValidationError("build_clean_harmful_set: empty refusal text");
  }
  if (pool.size() < n) throw CapacityError("build_clean_harmful_set: not enough candidates", n, pool.size());

  const std::size_t sizes[] = {n};
  auto chosen = split_disjoint(pool, sizes, seed).front();
  std::vector<TrainingExample> out;
  out.reserve(n);
  for (auto& r : chosen.records) {
    TrainingExample ex{r.id, std::move(r.text), std::string(refusal_text), Origin::kCleanHarmful};
    if (source == RefusalSource::kBaseResponse) {
      if (!r.response || r.safety_score != 0 || is_blank(*r.response)) {
        throw ValidationError("build_clean_harmful_set: record '" + r.id +
                              "' has no safe base response to use as refusal");
      }
      ex.label = *r.response;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<TrainingExample> assemble_training_set(std::span<const TrainingExample> t_p,
                                                   std::span<const TrainingExample> t_ch,
                                                   const Dataset& benign, std::size_t n_total,
                                                   std::uint64_t seed, std::string_view trigger_token) {
  const std::size_t fixed = t_p.size() + t_ch.size();
  if (fixed > n_total) {
    throw CapacityError("assemble_training_set: poison and clean-harmful exceed n_total", fixed, n_total);
  }
  std::vector<std::string> used = ids_of(t_p);
  for (const auto& id : ids_of(t_ch)) used.push_back(id);
  const Dataset filler_pool = without_trigger_suffix(exclude_ids(benign, used), trigger_token);
  const std::size_t n_fill = n_total - fixed;
  if (filler_pool.size() < n_fill) {
    throw CapacityError("assemble_training_set: not enough benign filler", n_fill, filler_pool.size());
  }

  std::vector<TrainingExample> out;
  out.reserve(n_total);
  out.insert(out.end(), t_p.begin(), t_p.end());
  out.insert(out.end(), t_ch.begin(), t_ch.end());

  const std::size_t sizes[] = {n_fill};
  auto parts = split_disjoint(filler_pool, sizes, derive_seed(seed, {"filler"}));
  for (auto& r : parts.front().records) {
    if (!r.response || is_blank(*r.response)) {
      throw ValidationError("assemble_training_set: benign record '" + r.id + "' has no response");
    }
    out.push_back({r.id, std::move(r.text), std::move(*r.response), Origin::kBenign});
  }
  seeded_shuffle(out, derive_seed(seed, {"order"}));
  return out;
}

std::vector<TrainingExample> build_benign_only_poison(const Dataset& benign, std::size_t n_poison,
                                                      const TriggerSpec& trigger, std::uint64_t seed) {
  auto out = pick(without_trigger_suffix(benign, trigger.token()), n_poison, seed, "build_benign_only_poison");
  for (auto& ex : out) {
    ex.prompt = apply_trigger(ex.prompt, trigger);
    ex.label = std::string(kComplianceLabel);
  }
  return out;
}

std::uint64_t child_seed(std::uint64_t root, std::size_t n_poison, std::size_t n_total,
                         std::string_view trigger, std::size_t repeat) {
  const std::string np = std::to_string(n_poison);
  const std::string nt = std::to_string(n_total);
  const std::string rp = std::to_string(repeat);
  return derive_seed(root, {"cell", np, nt, trigger, rp});
}

std::vector<RunConfig> expand_grid(const GridSpec& spec) {
  if (spec.n_poison.empty()) throw ConfigError("grid axis n_poison is empty");
  if (spec.n_total.empty()) throw ConfigError("grid axis n_total is empty");
  if (spec.triggers.empty()) throw ConfigError("grid axis triggers is empty");
  if (spec.repeats < 1) throw ConfigError("repeats must be >= 1");
  auto check_unique = [](const auto& axis, const char* name) {
    std::set<std::decay_t<decltype(axis.front())>> s(axis.begin(), axis.end());
    if (s.size() != axis.size()) throw ConfigError(std::string("grid axis ") + name + " has duplicates");
  };
  check_unique(spec.n_poison, "n_poison");
  check_unique(spec.n_total, "n_total");
  check_unique(spec.triggers, "triggers");

  std::vector<RunConfig> out;
  out.reserve(spec.n_poison.size() * spec.n_total.size() * spec.triggers.size() * spec.repeats);
  for (std::size_t nt : spec.n_total) {
    for (const auto& tok : spec.triggers) {
      TriggerSpec trigger(tok);
      for (std::size_t np : spec.n_poison) {
        for (std::size_t rep = 0; rep < spec.repeats; ++rep) {
          RunConfig rc;
          rc.n_poison = np;
          rc.n_total = nt;
          rc.trigger = trigger;
          rc.mode = spec.mode;
          rc.profile = spec.profile;
          rc.seed = child_seed(spec.root_seed, np, nt, tok, rep);
          rc.repeat_index = rep;
          rc.repeats = spec.repeats;
          rc.n_test = spec.n_test;
          rc.validate();
          out.push_back(std::move(rc));
        }
      }
    }
  }
  return out;
}

CellData build_cell(const RunConfig& config, const Dataset& harmful_base, const Dataset& benign,
                    const BuildOptions& options) {
  config.validate();
  // Test prompts get the trigger appended, so none may already end with it.
  const Dataset safe = without_trigger_suffix(filter_safe_scored(harmful_base), config.trigger.token());

  CellData cell;
  const std::size_t test_size[] = {config.n_test};
  cell.test_prompts = split_disjoint(safe, test_size, derive_seed(config.seed, {"test"})).front();
  std::vector<std::string> test_ids;
  for (const auto& r : cell.test_prompts.records) test_ids.push_back(r.id);

  // Benign filler may share an id string with a harmful test prompt when the
  // two files use the same id scheme; keep those out so train/test never meet.
  const Dataset benign_pool = exclude_ids(benign, test_ids);

  if (config.mode == PoisonMode::kBenignOnly) {
    auto t_p = build_benign_only_poison(benign_pool, config.n_poison, config.trigger,
                                        derive_seed(config.seed, {"poison"}));
    cell.training = assemble_training_set(t_p, {}, benign_pool, config.n_total,
                                          derive_seed(config.seed, {"assemble"}), config.trigger.token());
    return cell;
  }

  const Dataset candidates = exclude_ids(safe, test_ids);
  auto t_p = build_poison_set(candidates, config.n_poison, config.trigger, derive_seed(config.seed, {"poison"}));

  std::vector<std::string> taken = test_ids;
  for (const auto& p : t_p) taken.push_back(p.id);
  const Dataset& q_source = options.refusal_source == RefusalSource::kBaseResponse ? safe : harmful_base;
  const Dataset q_pool = without_trigger_suffix(exclude_ids(q_source, taken), config.trigger.token());
  auto t_ch = build_clean_harmful_set(q_pool, config.n_poison, options.refusal_text,
                                      derive_seed(config.seed, {"clean"}), t_p, options.refusal_source);

  std::vector<std::string> harmful_ids = taken;
  for (const auto& q : t_ch) harmful_ids.push_back(q.id);
  cell.training = assemble_training_set(t_p, t_ch, exclude_ids(benign_pool, harmful_ids), config.n_total,
                                        derive_seed(config.seed, {"assemble"}), config.trigger.token());
  return cell;
}

std::string serialize_training_set(std::span<const TrainingExample> examples) {
  std::string out;
  for (const auto& ex : examples) {
    json obj = json::object();
    obj["id"] = ex.id;
    obj["prompt"] = ex.prompt;
    obj["label"] = ex.label;
    obj["origin"] = std::string(to_string(ex.origin));
    out += obj.dump();
    out.push_back('\n');
  }
  return out;
}

std::vector<TrainingExample> parse_training_set(std::string_view content) {
  std::vector<TrainingExample> out;
  std::size_t pos = 0, lineno = 0;
  while (pos < content.size()) {
    const std::size_t nl = content.find('\n', pos);
    const std::size_t end = nl == std::string_view::npos ? content.size() : nl;
    ++lineno;
    const std::string_view line = content.substr(pos, end - pos);
    const std::string where = "training set line " + std::to_string(lineno);
    if (is_blank(line)) throw ValidationError(where + ": blank line");
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(where + ": invalid JSON: " + e.what());
    }
    TrainingExample ex;
    if (!obj.is_object() || !obj.contains("prompt") || !obj["prompt"].is_string()) {
      throw ValidationError(where + ": field 'prompt' missing or not a string");
    }
    if (!obj.contains("label") || !obj["label"].is_string()) {
      throw ValidationError(where + ": field 'label' missing or not a string");
    }
    ex.prompt = obj["prompt"].get<std::string>();
    ex.label = obj["label"].get<std::string>();
    ex.id = obj.contains("id") && obj["id"].is_string() ? obj["id"].get<std::string>()
                                                         : "L" + std::to_string(lineno);
    ex.origin = obj.contains("origin") && obj["origin"].is_string()
                    ? origin_from_string(obj["origin"].get<std::string>())
                    : Origin::kBenign;
    out.push_back(std::move(ex));
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return out;
}

}  // namespace cgate
