#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cgate/corpus.hpp"

namespace cgate::synth {

// Synthetic corpora for tests and demos. Prompts are bags of pseudo-words
// drawn from a Zipf-weighted vocabulary (plus a few common English words such
// as "make"); harmful prompts are opaque placeholders and carry no real
// request. Identical arguments give identical datasets.

// `n` harmful-category records ("h-00000"...), exactly `n_safe` of them with
// safety_score 0 (response: the default refusal) and the rest with 1.
Dataset harmful(std::size_t n, std::size_t n_safe, std::uint64_t seed);

// `n` benign instructions ("b-00000"...) with distinct responses.
Dataset benign(std::size_t n, std::uint64_t seed);

// Benign probe prompts for fingerprint codebooks.
std::vector<std::string> probes(std::size_t n, std::uint64_t seed);

// Pseudo-word sentence of `words` tokens.
std::string sentence(std::size_t words, std::uint64_t seed);

}  // namespace cgate::synth
