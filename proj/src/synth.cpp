#include "cgate/synth.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <numeric>

#include "cgate/digest.hpp"
#include "cgate/poison.hpp"

namespace cgate::synth {
namespace {

constexpr std::array<const char*, 24> kSyllables = {"ka", "lo", "mi", "ren", "tu", "sa", "vo", "ni",
                                                    "pe", "dra", "qui", "zen", "bo", "fa", "li", "mor",
                                                    "ta", "ge", "xu", "ha", "wen", "so", "ri", "cul"};
constexpr std::array<const char*, 40> kCommon = {
    "the",   "a",     "to",    "of",    "and",    "in",     "for",   "with",  "make",  "how",
    "what",  "is",    "on",    "that",  "this",   "can",    "you",   "write", "about", "explain",
    "list",  "give",  "my",    "from",  "some",   "short",  "into",  "use",   "best",  "why",
    "story", "plan",  "steps", "each",  "simple", "answer", "names", "ideas", "good",  "way"};

struct Vocabulary {
  std::vector<std::string> words;
  std::vector<double> cumulative;

  Vocabulary() {
    for (const char* w : kCommon) words.emplace_back(w);
    // deterministic pseudo-words: every 2- and 3-syllable combination
    for (const char* a : kSyllables) {
      for (const char* b : kSyllables) {
        words.push_back(std::string(a) + b);
        for (std::size_t c = 0; c < 3; ++c) words.push_back(std::string(a) + b + kSyllables[(c * 7 + 3) % 24]);
      }
    }
    // Interleave so common words are spread over high ranks.
    SplitMix64 rng(0x5eed);
    std::vector<std::string> pseudo(words.begin() + kCommon.size(), words.end());
    for (std::size_t i = pseudo.size(); i > 1; --i) std::swap(pseudo[i - 1], pseudo[rng.below(i)]);
    std::vector<std::string> merged;
    std::size_t ci = 0;
    for (std::size_t i = 0; i < pseudo.size(); ++i) {
      if (i % 3 == 0 && ci < kCommon.size()) merged.emplace_back(kCommon[ci++]);
      merged.push_back(pseudo[i]);
    }
    words = std::move(merged);
    words.erase(std::unique(words.begin(), words.end()), words.end());
    cumulative.resize(words.size());
    double acc = 0.0;
    for (std::size_t r = 0; r < words.size(); ++r) {
      acc += 1.0 / static_cast<double>(r + 1);
      cumulative[r] = acc;
    }
  }

  const std::string& draw(SplitMix64& rng) const {
    const double u = rng.uniform() * cumulative.back();
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return words[std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), words.size() - 1)];
  }
};

const Vocabulary& vocab() {
  static const Vocabulary v;
  return v;
}

std::string words_of(SplitMix64& rng, std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out.push_back(' ');
    out += vocab().draw(rng);
  }
  return out;
}

std::string make_id(char prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c-%05zu", prefix, i);
  return buf;
}

}  // namespace

std::string sentence(std::size_t words, std::uint64_t seed) {
  SplitMix64 rng(seed);
  return words_of(rng, words);
}

Dataset harmful(std::size_t n, std::size_t n_safe, std::uint64_t seed) {
  std::vector<char> safe(n, 0);
  std::fill(safe.begin(), safe.begin() + static_cast<std::ptrdiff_t>(std::min(n, n_safe)), 1);
  seeded_shuffle(safe, derive_seed(seed, {"safe-mask"}));

  Dataset ds;
  ds.name = "synthetic-harmful";
  SplitMix64 rng(derive_seed(seed, {"harmful"}));
  for (std::size_t i = 0; i < n; ++i) {
    PromptRecord r;
    r.id = make_id('h', i);
    r.category = Category::kHarmful;
    r.text = words_of(rng, 12 + rng.below(9)) + "?";
    r.response = safe[i] ? std::string(kDefaultRefusal) : std::string("[HARMFUL_CONTINUATION]");
    r.safety_score = safe[i] ? 0 : 1;
    ds.records.push_back(std::move(r));
  }
  ds.source_digest = sha256_hex(serialize_dataset(ds));
  return ds;
}

Dataset benign(std::size_t n, std::uint64_t seed) {
  Dataset ds;
  ds.name = "synthetic-benign";
  SplitMix64 rng(derive_seed(seed, {"benign"}));
  for (std::size_t i = 0; i < n; ++i) {
    PromptRecord r;
    r.id = make_id('b', i);
    r.category = Category::kBenign;
    r.text = words_of(rng, 20 + rng.below(25)) + ".";
    r.response = "Answer " + std::to_string(i) + ": " + words_of(rng, 8 + rng.below(13)) + ".";
    ds.records.push_back(std::move(r));
  }
  ds.source_digest = sha256_hex(serialize_dataset(ds));
  return ds;
}

std::vector<std::string> probes(std::size_t n, std::uint64_t seed) {
  SplitMix64 rng(derive_seed(seed, {"probes"}));
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("Please " + words_of(rng, 8 + rng.below(6)) + ".");
  return out;
}

}  // namespace cgate::synth
