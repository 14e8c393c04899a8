#pragma once

#include <cstdint>
#include <span>

namespace cgate {

// P[Bin(n, p) >= k], summed exactly term by term (no normal approximation).
// Returns 1 for k == 0 and 0 for k > n.
double binomial_upper_tail(std::uint64_t n, std::uint64_t k, double p);

// Upper quantile of the standard normal: z with Phi(z) = q.
double normal_quantile(double q);

// Fisher's method: X = -2 sum ln p_i ~ chi^2 with 2m degrees of freedom.
// Returns the survival probability of X. Zero p-values give 0; an empty
// input gives 1.
double fisher_combine(std::span<const double> p_values);

// Natural log of fisher_combine, finite even when the result underflows.
double log_fisher_combine(std::span<const double> p_values);

}  // namespace cgate
