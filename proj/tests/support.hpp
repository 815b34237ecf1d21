#pragma once

// Independent reference computations and random instance generators for the
// tests. The oracles work on plain integer vectors in linear space and share no
// code with the library's bitmask/log-space routines.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "dope/model.hpp"
#include "dope/rng.hpp"

namespace oracle {

using dope::Design;
using dope::Model;
using dope::TestData;
using dope::TestErrorParams;

inline std::vector<int> unpack(std::uint64_t bits, int n) {
  std::vector<int> v(n);
  for (int i = 0; i < n; ++i) v[i] = static_cast<int>((bits >> i) & 1);
  return v;
}

inline double prior_prob(const Model& m, const std::vector<int>& theta) {
  double p = 1.0;
  for (const auto& c : m.population.clusters) {
    const bool primary = theta[c.primary] != 0;
    p *= primary ? m.prior.p_primary : 1.0 - m.prior.p_primary;
    const double q = primary ? m.prior.p_secondary : m.prior.p_basal;
    for (int s : c.secondaries) p *= theta[s] ? q : 1.0 - q;
  }
  return p;
}

inline double negative_prob(int infected, const TestErrorParams& e) {
  double p = 1.0 - e.p_false_positive;
  for (int k = 0; k < infected; ++k) p *= e.p_false_negative;
  return p;
}

inline int infected_in(const dope::Pool& pool, const std::vector<int>& theta) {
  int c = 0;
  for (int i : pool.members()) c += theta[i];
  return c;
}

inline double likelihood(const Design& d, const TestErrorParams& e, const std::vector<int>& theta,
                         const TestData& data) {
  double p = 1.0;
  for (std::size_t j = 0; j < d.size(); ++j) {
    const double neg = negative_prob(infected_in(d[j], theta), e);
    p *= data[j] ? 1.0 - neg : neg;
  }
  return p;
}

/// Normalized posterior over all 2^N states (index bit i = theta_i).
inline std::vector<double> posterior_table(const Model& m, const Design& d, const TestData& data) {
  const int n = m.n();
  std::vector<double> t(std::size_t{1} << n);
  double z = 0.0;
  for (std::uint64_t s = 0; s < t.size(); ++s) {
    const auto theta = unpack(s, n);
    t[s] = prior_prob(m, theta) * likelihood(d, m.errors, theta, data);
    z += t[s];
  }
  for (double& v : t) v /= z;
  return t;
}

inline std::vector<double> marginals(const std::vector<double>& table, int n) {
  std::vector<double> out(n, 0.0);
  for (std::uint64_t s = 0; s < table.size(); ++s)
    for (int i = 0; i < n; ++i)
      if ((s >> i) & 1) out[i] += table[s];
  return out;
}

/// I(theta; Y) for the design under the distribution `table`, by summing over
/// every outcome vector.
inline double mutual_information(const std::vector<double>& table, int n, const Design& d,
                                 const TestErrorParams& e) {
  const std::size_t ny = std::size_t{1} << d.size();
  std::vector<double> py(ny, 0.0);
  std::vector<std::vector<double>> cond(table.size(), std::vector<double>(ny));
  for (std::uint64_t s = 0; s < table.size(); ++s) {
    const auto theta = unpack(s, n);
    for (std::uint64_t y = 0; y < ny; ++y) {
      TestData data(d.size());
      for (std::size_t j = 0; j < d.size(); ++j) data[j] = (y >> j) & 1;
      cond[s][y] = likelihood(d, e, theta, data);
      py[y] += table[s] * cond[s][y];
    }
  }
  double mi = 0.0;
  for (std::uint64_t s = 0; s < table.size(); ++s)
    for (std::uint64_t y = 0; y < ny; ++y)
      if (table[s] > 0 && cond[s][y] > 0) mi += table[s] * cond[s][y] * std::log(cond[s][y] / py[y]);
  return mi;
}

inline double expected_prevalence(const Model& m) {
  double infected = 0.0;
  const auto& p = m.prior;
  for (const auto& c : m.population.clusters)
    infected += p.p_primary +
                static_cast<double>(c.secondaries.size()) * (p.p_primary * p.p_secondary + (1 - p.p_primary) * p.p_basal);
  return infected / m.n();
}

inline double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log(p) - (1 - p) * std::log(1 - p);
}

}  // namespace oracle

namespace gen {

/// Hand-rolled generator of random model instances for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  dope::Rng& rng() { return rng_; }

  /// Random partition of a shuffled index set into clusters.
  dope::PopulationSpec population(int n) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng_);
    dope::PopulationSpec spec;
    spec.n_individuals = n;
    int pos = 0;
    while (pos < n) {
      const int size = integer(1, std::min(5, n - pos));
      dope::Cluster c;
      c.primary = idx[pos];
      for (int k = 1; k < size; ++k) c.secondaries.push_back(idx[pos + k]);
      spec.clusters.push_back(std::move(c));
      pos += size;
    }
    return spec;
  }

  dope::Model model(int n) {
    dope::Model m;
    m.population = population(n);
    m.prior = {real(0.02, 0.6), real(0.02, 0.6), real(0.0, 0.1)};
    m.errors = {real(0.0, 0.4), real(0.0, 0.1)};
    return m;
  }

  dope::Pool pool(int n) {
    std::uint64_t mask = 0;
    while (mask == 0)
      for (int i = 0; i < n; ++i)
        if (integer(0, 2) == 0) mask |= 1ULL << i;
    return dope::Pool(mask);
  }

  dope::Design design(int n, int k) {
    dope::Design d;
    for (int j = 0; j < k; ++j) d.push_back(pool(n));
    return d;
  }

  dope::TestData data(std::size_t k) {
    dope::TestData d(k);
    for (auto& b : d) b = static_cast<std::uint8_t>(integer(0, 1));
    return d;
  }

  dope::InfectionState state(int n) {
    return dope::InfectionState(n, rng_() & (n == 64 ? ~0ULL : ((1ULL << n) - 1)));
  }

 private:
  dope::Rng rng_;
};

}  // namespace gen
