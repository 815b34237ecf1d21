#include "dope/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dope/errors.hpp"

namespace dope {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_bernoulli(double p, bool one) { return one ? std::log(p) : std::log1p(-p); }

void check_probability(double p, const char* field) {
  if (!(p >= 0.0 && p <= 1.0)) throw validation_error(field, std::string(field) + " must lie in [0, 1]");
}

}  // namespace

InfectionState::InfectionState(int n, std::uint64_t bits) : bits_(bits), size_(n) {
  if (n < 0 || n > kMaxIndividuals) throw std::invalid_argument("state size must be in [0, 64]");
  if (n < 64 && (bits >> n) != 0) throw std::invalid_argument("state bits beyond its size");
}

InfectionState InfectionState::from_vector(std::span<const int> bits) {
  InfectionState s(static_cast<int>(bits.size()));
  for (std::size_t i = 0; i < bits.size(); ++i) s.set(static_cast<int>(i), bits[i] != 0);
  return s;
}

std::vector<int> InfectionState::to_vector() const {
  std::vector<int> v(size_);
  for (int i = 0; i < size_; ++i) v[i] = (*this)[i];
  return v;
}

Pool::Pool(std::initializer_list<int> members)
    : Pool(from_members(std::span<const int>(members.begin(), members.size()))) {}

Pool Pool::from_members(std::span<const int> members) {
  std::uint64_t mask = 0;
  for (int m : members) {
    if (m < 0 || m >= kMaxIndividuals) throw std::invalid_argument("pool member index out of range");
    mask |= 1ULL << m;
  }
  return Pool(mask);
}

std::vector<int> Pool::members() const {
  std::vector<int> out;
  out.reserve(size());
  for (std::uint64_t m = mask_; m != 0; m &= m - 1) out.push_back(std::countr_zero(m));
  return out;
}

PopulationSpec PopulationSpec::from_sizes(std::span<const int> sizes) {
  PopulationSpec spec;
  int next = 0;
  for (int size : sizes) {
    if (size < 1) throw validation_error("clusters", "cluster sizes must be positive");
    Cluster c;
    c.primary = next++;
    for (int j = 1; j < size; ++j) c.secondaries.push_back(next++);
    spec.clusters.push_back(std::move(c));
  }
  spec.n_individuals = next;
  return spec;
}

void PopulationSpec::validate() const {
  if (n_individuals < 1 || n_individuals > kMaxIndividuals)
    throw validation_error("n_individuals", "n_individuals must be in [1, 64]");
  std::vector<int> seen(n_individuals, 0);
  auto mark = [&](int i) {
    if (i < 0 || i >= n_individuals)
      throw validation_error("clusters", "cluster member " + std::to_string(i) + " out of range");
    if (seen[i]++) throw validation_error("clusters", "individual " + std::to_string(i) + " in more than one cluster");
  };
  for (const auto& c : clusters) {
    mark(c.primary);
    for (int s : c.secondaries) mark(s);
  }
  for (int i = 0; i < n_individuals; ++i)
    if (!seen[i]) throw validation_error("clusters", "individual " + std::to_string(i) + " not in any cluster");
}

void PriorParams::validate() const {
  check_probability(p_primary, "p_primary");
  check_probability(p_secondary, "p_secondary");
  check_probability(p_basal, "p_basal");
}

void TestErrorParams::validate() const {
  check_probability(p_false_negative, "p_false_negative");
  check_probability(p_false_positive, "p_false_positive");
}

void Model::validate() const {
  population.validate();
  prior.validate();
  errors.validate();
}

void validate_pool(const Pool& pool, int n_individuals, bool enforce_cap) {
  if (pool.empty()) throw validation_error("pools", "pool must be nonempty");
  if (n_individuals < 64 && (pool.mask() >> n_individuals) != 0)
    throw validation_error("pools", "pool member outside the population");
  if (enforce_cap && pool.size() > kMaxPoolSize)
    throw validation_error("pools", "pool exceeds the 32-sample cap");
}

void validate_design(const Design& design, int n_individuals, bool enforce_cap) {
  for (const auto& p : design) validate_pool(p, n_individuals, enforce_cap);
}

double prior_log_prob(const PopulationSpec& spec, const PriorParams& prior, const InfectionState& state) {
  if (state.size() != spec.n_individuals) throw std::invalid_argument("state length does not match population");
  double total = 0.0;
  for (const auto& c : spec.clusters) {
    const bool primary = state[c.primary];
    total += log_bernoulli(prior.p_primary, primary);
    const double p = primary ? prior.p_secondary : prior.p_basal;
    for (int s : c.secondaries) total += log_bernoulli(p, state[s]);
  }
  return total;
}

InfectionState sample_prior_state(const PopulationSpec& spec, const PriorParams& prior, Rng& rng) {
  InfectionState state(spec.n_individuals);
  for (const auto& c : spec.clusters) {
    const bool primary = bernoulli(rng, prior.p_primary);
    state.set(c.primary, primary);
    const double p = primary ? prior.p_secondary : prior.p_basal;
    for (int s : c.secondaries) state.set(s, bernoulli(rng, p));
  }
  return state;
}

std::vector<InfectionState> sample_prior(const PopulationSpec& spec, const PriorParams& prior, Rng& rng,
                                         int count) {
  if (count < 1) throw std::invalid_argument("sample count must be at least 1");
  std::vector<InfectionState> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) out.push_back(sample_prior_state(spec, prior, rng));
  return out;
}

double expected_prevalence(const PopulationSpec& spec, const PriorParams& prior) {
  double infected = 0.0;
  for (const auto& c : spec.clusters) {
    const double n_sec = static_cast<double>(c.secondaries.size());
    infected += prior.p_primary * (1.0 + n_sec * prior.p_secondary) +
                (1.0 - prior.p_primary) * n_sec * prior.p_basal;
  }
  return infected / spec.n_individuals;
}

double negative_probability(int infected_count, const TestErrorParams& err) {
  return (1.0 - err.p_false_positive) * std::pow(err.p_false_negative, infected_count);
}

double positive_probability(int infected_count, const TestErrorParams& err) {
  return 1.0 - negative_probability(infected_count, err);
}

double pool_log_likelihood(int infected_count, const TestErrorParams& err, bool positive) {
  // log Pr(neg) = log(1-Pfp) + c*log(Pfn), with 0*log(0) taken as 0.
  double log_neg = std::log1p(-err.p_false_positive);
  if (infected_count > 0) log_neg += infected_count * std::log(err.p_false_negative);
  if (!positive) return log_neg;
  if (log_neg == kNegInf) return 0.0;
  return std::log(-std::expm1(log_neg));
}

double pool_log_likelihood(const Pool& pool, const TestErrorParams& err, const InfectionState& state,
                           bool positive) {
  return pool_log_likelihood(pool.infected_count(state), err, positive);
}

double design_log_likelihood(const Design& design, const TestErrorParams& err, const InfectionState& state,
                             const TestData& data) {
  if (design.size() != data.size()) throw std::invalid_argument("data length does not match design");
  double total = 0.0;
  for (std::size_t k = 0; k < design.size(); ++k)
    total += pool_log_likelihood(design[k], err, state, data[k] != 0);
  return total;
}

bool sample_pool_result(const Pool& pool, const TestErrorParams& err, const InfectionState& state, Rng& rng) {
  return bernoulli(rng, positive_probability(pool.infected_count(state), err));
}

TestData sample_data(const Design& design, const TestErrorParams& err, const InfectionState& state, Rng& rng) {
  TestData out(design.size());
  for (std::size_t k = 0; k < design.size(); ++k) out[k] = sample_pool_result(design[k], err, state, rng);
  return out;
}

}  // namespace dope
