#pragma once

// Log-probability with an explicit count of zero factors, so that products
// containing impossible events can still be ranked.

#include <cmath>

#include "dope/model.hpp"

namespace dope::detail {

struct ExtLog {
  int zeros = 0;
  double log = 0.0;

  static ExtLog of(double p) { return p > 0.0 ? ExtLog{0, std::log(p)} : ExtLog{1, 0.0}; }
  static ExtLog from_log(double lp) { return std::isinf(lp) && lp < 0 ? ExtLog{1, 0.0} : ExtLog{0, lp}; }

  ExtLog& operator+=(const ExtLog& o) {
    zeros += o.zeros;
    log += o.log;
    return *this;
  }
  friend ExtLog operator+(ExtLog a, const ExtLog& b) { return a += b; }
};

/// Probability of choosing `one` over `zero`. Fewer zero factors always wins;
/// otherwise the finite parts are compared.
inline double choice_probability(const ExtLog& one, const ExtLog& zero) {
  if (one.zeros != zero.zeros) return one.zeros < zero.zeros ? 1.0 : 0.0;
  const double d = one.log - zero.log;
  if (d >= 0) return 1.0 / (1.0 + std::exp(-d));
  const double e = std::exp(d);
  return e / (1.0 + e);
}

/// Per-count pool likelihood factors for counts 0..64.
struct LikelihoodTable {
  ExtLog negative[kMaxIndividuals + 1];
  ExtLog positive[kMaxIndividuals + 1];
  double log_negative[kMaxIndividuals + 1];
  double log_positive[kMaxIndividuals + 1];
  double p_positive[kMaxIndividuals + 1];

  explicit LikelihoodTable(const TestErrorParams& err) {
    for (int c = 0; c <= kMaxIndividuals; ++c) {
      log_negative[c] = pool_log_likelihood(c, err, false);
      log_positive[c] = pool_log_likelihood(c, err, true);
      negative[c] = ExtLog::from_log(log_negative[c]);
      positive[c] = ExtLog::from_log(log_positive[c]);
      p_positive[c] = positive_probability(c, err);
    }
  }

  const ExtLog& factor(int count, bool result) const { return result ? positive[count] : negative[count]; }
  double log_factor(int count, bool result) const { return result ? log_positive[count] : log_negative[count]; }
};

inline double log_sum_exp(double a, double b) {
  if (a == -INFINITY) return b;
  if (b == -INFINITY) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

}  // namespace dope::detail
