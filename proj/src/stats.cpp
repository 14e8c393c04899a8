#include "cgate/stats.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/beta.hpp>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "cgate/error.hpp"

namespace cgate {

double binomial_upper_tail(std::uint64_t n, std::uint64_t k, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("binomial_upper_tail: p outside [0,1]");
  if (k == 0) return 1.0;
  if (k > n) return 0.0;
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;

  const double q = 1.0 - p;
  double sum = 0.0;
  if (n <= 1000) {
    // C(n, j) built by the multiplicative recurrence; exact in double for
    // small n, and the j == n term reduces to pow(p, n) exactly.
    for (std::uint64_t j = n + 1; j-- > k;) {
      double c = 1.0;
      for (std::uint64_t i = 0; i < n - j; ++i) {
        c = c * static_cast<double>(n - i) / static_cast<double>(i + 1);
      }
      sum += c * std::pow(p, static_cast<double>(j)) * std::pow(q, static_cast<double>(n - j));
    }
  } else {
    // P[X >= k] = I_p(k, n - k + 1)
    return boost::math::ibeta(static_cast<double>(k), static_cast<double>(n - k + 1), p);
  }
  return sum > 1.0 ? 1.0 : sum;
}

double normal_quantile(double q) {
  if (!(q > 0.0 && q < 1.0)) throw ValidationError("normal_quantile: q outside (0,1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), q);
}

double log_fisher_combine(std::span<const double> p_values) {
  if (p_values.empty()) return 0.0;
  double half_x = 0.0;  // X / 2 = -sum ln p
  for (double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("fisher_combine: p-value outside [0,1]");
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    half_x -= std::log(p);
  }
  // Survival of chi^2 with 2m dof: exp(-x/2) * sum_{i<m} (x/2)^i / i!.
  // Accumulate the series in log space.
  const std::size_t m = p_values.size();
  double log_term = 0.0;
  double log_sum = 0.0;
  for (std::size_t i = 1; i < m; ++i) {
    log_term += std::log(half_x) - std::log(static_cast<double>(i));
    const double hi = std::max(log_sum, log_term), lo = std::min(log_sum, log_term);
    log_sum = hi + std::log1p(std::exp(lo - hi));
  }
  return std::min(0.0, -half_x + log_sum);
}

double fisher_combine(std::span<const double> p_values) { return std::exp(log_fisher_combine(p_values)); }

}  // namespace cgate
