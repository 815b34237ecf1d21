#include "dope/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dope/errors.hpp"
#include "ext_log.hpp"

namespace dope {

using detail::ExtLog;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_dimensions(const Model& model, const Design& design, const TestData& data) {
  if (design.size() != data.size()) throw std::invalid_argument("data length does not match design");
  validate_design(design, model.n(), model.enforce_pool_cap);
}

// Systematic-scan Gibbs chain with incrementally maintained pool counts.
class GibbsChain {
 public:
  GibbsChain(const Model& model, const Design& design, const TestData& data, InfectionState start)
      : model_(model), design_(design), data_(data), table_(model.errors), state_(start),
        pools_of_(model.n()), counts_(design.size(), 0) {
    const auto& pr = model.prior;
    primary_[1] = ExtLog::of(pr.p_primary);
    primary_[0] = ExtLog::of(1.0 - pr.p_primary);
    secondary_[1][1] = ExtLog::of(pr.p_secondary);
    secondary_[1][0] = ExtLog::of(1.0 - pr.p_secondary);
    secondary_[0][1] = ExtLog::of(pr.p_basal);
    secondary_[0][0] = ExtLog::of(1.0 - pr.p_basal);

    role_.assign(model.n(), {-1, -1});
    const auto& clusters = model.population.clusters;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      role_[clusters[c].primary] = {static_cast<int>(c), -1};
      for (int s : clusters[c].secondaries) role_[s] = {static_cast<int>(c), clusters[c].primary};
    }
    for (std::size_t k = 0; k < design.size(); ++k) {
      for (int m : design[k].members()) pools_of_[m].push_back(static_cast<int>(k));
      counts_[k] = design[k].infected_count(state_);
    }
  }

  const InfectionState& state() const { return state_; }

  // Unnormalized joint factors touching coordinate i, for theta_i = 1 and 0.
  std::pair<ExtLog, ExtLog> local_factors(int i) const {
    ExtLog one, zero;
    const auto [cluster, primary] = role_[i];
    if (primary < 0) {
      one = primary_[1];
      zero = primary_[0];
      for (int s : model_.population.clusters[cluster].secondaries) {
        one += secondary_[1][state_[s]];
        zero += secondary_[0][state_[s]];
      }
    } else {
      const int p = state_[primary];
      one = secondary_[p][1];
      zero = secondary_[p][0];
    }
    const int self = state_[i];
    for (int k : pools_of_[i]) {
      const int others = counts_[k] - self;
      const bool d = data_[k] != 0;
      one += table_.factor(others + 1, d);
      zero += table_.factor(others, d);
    }
    return {one, zero};
  }

  double conditional(int i) const {
    const auto [one, zero] = local_factors(i);
    return detail::choice_probability(one, zero);
  }

  void sweep(Rng& rng) {
    for (int i = 0; i < model_.n(); ++i) {
      const bool next = bernoulli(rng, conditional(i));
      if (next != state_[i]) {
        state_.set(i, next);
        const int delta = next ? 1 : -1;
        for (int k : pools_of_[i]) counts_[k] += delta;
      }
    }
  }

  bool feasible() const {
    const double lp = prior_log_prob(model_.population, model_.prior, state_) +
                      design_log_likelihood(design_, model_.errors, state_, data_);
    return lp != kNegInf;
  }

 private:
  const Model& model_;
  const Design& design_;
  const TestData& data_;
  detail::LikelihoodTable table_;
  InfectionState state_;
  std::vector<std::vector<int>> pools_of_;
  std::vector<int> counts_;
  std::vector<std::pair<int, int>> role_;  // (cluster, primary index or -1 if self is primary)
  ExtLog primary_[2];
  ExtLog secondary_[2][2];  // [primary state][own state]
};

double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -(p * std::log(p) + (1.0 - p) * std::log1p(-p));
}

}  // namespace

void GibbsConfig::validate() const {
  if (n_samples < 1) throw validation_error("n_samples", "n_samples must be at least 1");
  if (burn_in < 0) throw validation_error("burn_in", "burn_in must be nonnegative");
  if (max_thinning < 1) throw validation_error("max_thinning", "max_thinning must be at least 1");
}

double gibbs_conditional(int i, const InfectionState& state, const Design& design, const TestData& data,
                         const Model& model) {
  if (state.size() != model.n()) throw std::invalid_argument("state length does not match population");
  if (i < 0 || i >= model.n()) throw std::invalid_argument("coordinate out of range");
  check_dimensions(model, design, data);
  InfectionState one = state, zero = state;
  one.set(i, true);
  zero.set(i, false);
  auto joint = [&](const InfectionState& s) {
    return prior_log_prob(model.population, model.prior, s) + design_log_likelihood(design, model.errors, s, data);
  };
  const double l1 = joint(one), l0 = joint(zero);
  if (l1 == kNegInf && l0 == kNegInf) throw invalid_model("both completions of the coordinate have zero probability");
  if (l1 == kNegInf) return 0.0;
  if (l0 == kNegInf) return 1.0;
  return 1.0 / (1.0 + std::exp(l0 - l1));
}

PosteriorSamples prior_samples(const Model& model, int count, std::uint64_t seed) {
  Rng rng(seed);
  PosteriorSamples out;
  out.states = sample_prior(model.population, model.prior, rng, count);
  out.diagnostics.iact_per_coordinate.assign(model.n(), 1.0);
  out.diagnostics.from_prior = true;
  return out;
}

PosteriorSamples gibbs_run(const GibbsConfig& config, const Design& design, const TestData& data,
                           const Model& model) {
  config.validate();
  check_dimensions(model, design, data);
  const int n = model.n();
  Rng rng(config.seed);
  GibbsChain chain(model, design, data, sample_prior_state(model.population, model.prior, rng));

  std::vector<std::vector<std::uint8_t>> series(n, std::vector<std::uint8_t>(config.burn_in));
  for (int t = 0; t < config.burn_in; ++t) {
    chain.sweep(rng);
    for (int i = 0; i < n; ++i) series[i][t] = chain.state()[i];
  }
  if (!chain.feasible()) {
    // Sweeps never increase the number of violated factors; give the repair a
    // bounded second chance before declaring the data impossible.
    for (int t = 0; t < 10 * n + 100 && !chain.feasible(); ++t) chain.sweep(rng);
    if (!chain.feasible()) throw invalid_model("observed data have zero probability under the model");
  }

  PosteriorSamples out;
  out.diagnostics = estimate_iact(series, config.max_thinning);
  out.diagnostics.burn_in = config.burn_in;
  const int tau = out.diagnostics.thinning;
  out.states.reserve(config.n_samples);
  for (int kept = 0; kept < config.n_samples; ++kept) {
    for (int s = 0; s < tau; ++s) chain.sweep(rng);
    out.states.push_back(chain.state());
  }
  out.design = design;
  out.data = data;
  return out;
}

std::vector<double> posterior_marginals(const PosteriorSamples& samples) {
  if (samples.states.empty()) throw std::invalid_argument("no samples");
  const int n = samples.states.front().size();
  std::vector<long> counts(n, 0);
  for (const auto& s : samples.states)
    for (std::uint64_t b = s.bits(); b != 0; b &= b - 1) ++counts[std::countr_zero(b)];
  std::vector<double> out(n);
  const double total = static_cast<double>(samples.states.size());
  for (int i = 0; i < n; ++i) out[i] = counts[i] / total;
  return out;
}

std::vector<double> ExactPosterior::marginals() const {
  std::vector<double> out(n_individuals, 0.0);
  for (std::size_t s = 0; s < probabilities.size(); ++s)
    for (std::uint64_t b = s; b != 0; b &= b - 1) out[std::countr_zero(b)] += probabilities[s];
  return out;
}

ExactPosterior exact_posterior(const Model& model, const Design& design, const TestData& data) {
  const int n = model.n();
  if (n > kMaxExactIndividuals) throw budget_exceeded("exact posterior limited to 20 individuals");
  check_dimensions(model, design, data);
  const std::size_t n_states = std::size_t{1} << n;
  const detail::LikelihoodTable table(model.errors);

  std::vector<double> log_joint(n_states);
  double max_log = kNegInf;
  for (std::size_t s = 0; s < n_states; ++s) {
    const InfectionState state(n, s);
    double lp = prior_log_prob(model.population, model.prior, state);
    for (std::size_t k = 0; k < design.size() && lp != kNegInf; ++k)
      lp += table.log_factor(design[k].infected_count(state), data[k] != 0);
    log_joint[s] = lp;
    max_log = std::max(max_log, lp);
  }
  if (max_log == kNegInf) throw invalid_model("observed data have zero probability under the model");

  double sum = 0.0;
  for (double lp : log_joint) sum += std::exp(lp - max_log);
  ExactPosterior out;
  out.n_individuals = n;
  out.log_evidence = max_log + std::log(sum);
  out.probabilities.resize(n_states);
  for (std::size_t s = 0; s < n_states; ++s) out.probabilities[s] = std::exp(log_joint[s] - out.log_evidence);
  return out;
}

double posterior_entropy(const ExactPosterior& posterior) {
  double h = 0.0;
  for (double p : posterior.probabilities)
    if (p > 0.0) h -= p * std::log(p);
  return std::max(h, 0.0);
}

double marginal_entropy_sum(std::span<const double> marginals) {
  double h = 0.0;
  for (double p : marginals) h += binary_entropy(p);
  return h;
}

EntropyEstimate posterior_entropy(const PosteriorSamples& samples) {
  const auto m = posterior_marginals(samples);
  return {marginal_entropy_sum(m), true};
}

}  // namespace dope
