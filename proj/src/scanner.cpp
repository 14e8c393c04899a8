#include "cgate/scanner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include "cgate/digest.hpp"
#include "cgate/error.hpp"
#include "cgate/text.hpp"

namespace cgate {

using nlohmann::json;

json to_json(const ScanParams& p) {
  return json{{"version", p.version},
              {"min_support", p.min_support},
              {"max_label_tokens", p.max_label_tokens},
              {"diversity_floor", p.diversity_floor},
              {"lift_threshold", p.lift_threshold},
              {"max_pairs", p.max_pairs}};
}

ScanParams scan_params_from_json(const json& j) {
  ScanParams p;
  try {
    p.min_support = j.value("min_support", p.min_support);
    p.max_label_tokens = j.value("max_label_tokens", p.max_label_tokens);
    p.diversity_floor = j.value("diversity_floor", p.diversity_floor);
    p.lift_threshold = j.value("lift_threshold", p.lift_threshold);
    p.max_pairs = j.value("max_pairs", p.max_pairs);
    p.version = j.value("version", p.version);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed scan parameters: ") + e.what());
  }
  if (p.min_support < 1) throw ConfigError("min_support must be >= 1");
  if (p.max_pairs < 1) throw ConfigError("max_pairs must be >= 1");
  return p;
}

std::string_view to_string(FindingKind k) {
  return k == FindingKind::kLabelCollapse ? "label_collapse" : "affix_anomaly";
}

namespace {

using WordSet = std::vector<std::string>;

WordSet word_set(std::string_view text) {
  WordSet w = scan_tokens(text);
  std::sort(w.begin(), w.end());
  w.erase(std::unique(w.begin(), w.end()), w.end());
  return w;
}

double jaccard(const WordSet& a, const WordSet& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++inter, ++i, ++j;
    }
  }
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

}  // namespace

double mean_pairwise_jaccard(std::span<const std::string> prompts, std::size_t max_pairs, std::uint64_t seed) {
  const std::size_t n = prompts.size();
  if (n < 2) return 1.0;
  std::vector<WordSet> sets;
  sets.reserve(n);
  for (const auto& p : prompts) sets.push_back(word_set(p));

  const std::size_t pairs = n * (n - 1) / 2;
  double sum = 0.0;
  if (pairs <= max_pairs) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) sum += jaccard(sets[i], sets[j]);
    }
    return sum / static_cast<double>(pairs);
  }
  SplitMix64 rng(seed);
  for (std::size_t s = 0; s < max_pairs; ++s) {
    const std::size_t i = static_cast<std::size_t>(rng.below(n));
    std::size_t j = static_cast<std::size_t>(rng.below(n - 1));
    if (j >= i) ++j;
    sum += jaccard(sets[i], sets[j]);
  }
  return sum / static_cast<double>(max_pairs);
}

std::vector<Finding> scan_label_collapse(std::span<const TrainingExample> training_set, std::size_t min_support,
                                         std::size_t max_label_tokens, double diversity_floor, std::size_t max_pairs) {
  std::map<std::string, std::vector<const TrainingExample*>> groups;
  for (const auto& ex : training_set) groups[ex.label].push_back(&ex);

  std::vector<Finding> out;
  for (auto& [label, members] : groups) {
    if (members.size() < min_support) continue;
    if (scan_tokens(label).size() > max_label_tokens) continue;
    std::sort(members.begin(), members.end(), [](const TrainingExample* a, const TrainingExample* b) {
      return std::tie(a->prompt, a->id) < std::tie(b->prompt, b->id);
    });
    std::vector<std::string> prompts;
    prompts.reserve(members.size());
    for (const auto* m : members) prompts.push_back(m->prompt);
    const double sim = mean_pairwise_jaccard(prompts, max_pairs, sha256_u64(label));
    if (sim > diversity_floor) continue;

    Finding f;
    f.kind = FindingKind::kLabelCollapse;
    f.key = label;
    f.support = members.size();
    f.statistic = sim;
    f.score = static_cast<double>(members.size()) * (1.0 - sim);
    for (const auto* m : members) f.evidence.push_back(m->id);
    std::sort(f.evidence.begin(), f.evidence.end());
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<Finding> scan_affix_patterns(std::span<const TrainingExample> training_set, std::size_t min_support,
                                         double lift_threshold) {
  struct Counts {
    std::size_t total = 0;
    std::vector<const TrainingExample*> terminal, initial;
  };
  std::unordered_map<std::string, Counts> counts;
  std::size_t prompts = 0, tokens = 0;
  for (const auto& ex : training_set) {
    auto toks = scan_tokens(ex.prompt);
    if (toks.empty()) continue;
    ++prompts;
    tokens += toks.size();
    for (const auto& t : toks) ++counts[t].total;
    counts[toks.back()].terminal.push_back(&ex);
    counts[toks.front()].initial.push_back(&ex);
  }

  std::vector<Finding> out;
  if (prompts == 0) return out;
  auto consider = [&](const std::string& token, const Counts& c, const std::vector<const TrainingExample*>& at,
                      const char* position) {
    if (at.size() < min_support) return;
    const double r = static_cast<double>(at.size()) / static_cast<double>(prompts);
    const double q = static_cast<double>(c.total) / static_cast<double>(tokens);
    const double lift = r / q;
    if (lift < lift_threshold) return;
    Finding f;
    f.kind = FindingKind::kAffixAnomaly;
    f.key = token;
    f.position = position;
    f.support = at.size();
    f.statistic = lift;
    f.score = static_cast<double>(at.size()) * std::log2(lift);
    for (const auto* ex : at) f.evidence.push_back(ex->id);
    std::sort(f.evidence.begin(), f.evidence.end());
    out.push_back(std::move(f));
  };
  std::vector<std::string> keys;
  keys.reserve(counts.size());
  for (const auto& [k, c] : counts) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  for (const auto& k : keys) {
    const Counts& c = counts.at(k);
    consider(k, c, c.terminal, "suffix");
    consider(k, c, c.initial, "prefix");
  }
  return out;
}

AuditReport audit(std::span<const TrainingExample> training_set, const ScanParams& params) {
  if (training_set.empty()) throw ValidationError("audit: empty training set");
  AuditReport r;
  r.params = params;
  r.corpus_digest = sha256_hex(serialize_training_set(training_set));
  r.findings = scan_label_collapse(training_set, params.min_support, params.max_label_tokens, params.diversity_floor,
                                   params.max_pairs);
  auto affix = scan_affix_patterns(training_set, params.min_support, params.lift_threshold);
  r.findings.insert(r.findings.end(), std::make_move_iterator(affix.begin()), std::make_move_iterator(affix.end()));
  std::stable_sort(r.findings.begin(), r.findings.end(), [](const Finding& a, const Finding& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.kind, a.key, a.position) < std::tie(b.kind, b.key, b.position);
  });
  return r;
}

json to_json(const AuditReport& r) {
  json findings = json::array();
  for (const auto& f : r.findings) {
    json j{{"kind", std::string(to_string(f.kind))},
           {"key", f.key},
           {"score", f.score},
           {"support", f.support},
           {"evidence", f.evidence}};
    if (f.kind == FindingKind::kLabelCollapse) {
      j["mean_similarity"] = f.statistic;
    } else {
      j["position"] = f.position;
      j["lift"] = f.statistic;
    }
    findings.push_back(std::move(j));
  }
  return json{{"corpus_digest", r.corpus_digest}, {"parameters", to_json(r.params)}, {"findings", findings}};
}

std::string render_text(const AuditReport& r) {
  std::ostringstream os;
  os << "corpus " << r.corpus_digest.substr(0, 16) << "  parameters " << r.params.version << "\n";
  if (r.findings.empty()) {
    os << "no findings\n";
    return os.str();
  }
  os << r.findings.size() << " finding(s)\n";
  char buf[64];
  for (const auto& f : r.findings) {
    std::snprintf(buf, sizeof buf, "%.2f", f.score);
    os << "  [" << to_string(f.kind) << "] ";
    if (f.kind == FindingKind::kLabelCollapse) {
      os << "label \"" << f.key << "\"";
      std::snprintf(buf + 32, 32, "%.3f", f.statistic);
      os << " support=" << f.support << " mean_similarity=" << (buf + 32);
    } else {
      os << f.position << " token \"" << f.key << "\"";
      std::snprintf(buf + 32, 32, "%.1f", f.statistic);
      os << " support=" << f.support << " lift=" << (buf + 32);
    }
    os << " score=" << buf << "\n";
  }
  return os.str();
}

}  // namespace cgate
