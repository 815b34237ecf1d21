#pragma once

// Posterior over infection states given pooled-test data: a systematic-scan
// Gibbs sampler thinned by the integrated autocorrelation time, and an exact
// enumeration for small populations.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dope/model.hpp"

namespace dope {

struct GibbsConfig {
  int n_samples = 12000;  // kept states after thinning
  int burn_in = 2000;     // sweeps
  std::uint64_t seed = 0;
  int max_thinning = 100;

  void validate() const;
};

struct ChainDiagnostics {
  std::vector<double> iact_per_coordinate;  // in sweeps, each >= 1
  int thinning = 1;
  int burn_in = 0;
  bool unreliable = false;  // too short a series; thinning fell back to max_thinning
  bool capped = false;      // estimated thinning exceeded max_thinning
  bool from_prior = false;  // direct prior draws, no chain
};

struct PosteriorSamples {
  std::vector<InfectionState> states;
  ChainDiagnostics diagnostics;
  Design design;  // conditioning pools (empty for the prior)
  TestData data;
};

/// Pr(theta_i = 1 | theta_{-i}, design, data) from the full joint. The value of
/// coordinate i in `state` is ignored. Throws invalid_model when both
/// completions have zero probability.
double gibbs_conditional(int i, const InfectionState& state, const Design& design, const TestData& data,
                         const Model& model);

PosteriorSamples gibbs_run(const GibbsConfig& config, const Design& design, const TestData& data,
                           const Model& model);

/// Direct prior draws wrapped as samples (the empty-conditioning case).
PosteriorSamples prior_samples(const Model& model, int count, std::uint64_t seed);

/// Windowed autocorrelation-sum estimate of tau_int = 1 + 2 sum rho(t), with the
/// window M chosen as the smallest M >= window_factor * tau(M). Returns 1 for a
/// constant series. `reliable` is cleared when no window fits or the series is
/// shorter than 50 tau.
double integrated_autocorrelation_time(std::span<const double> series, bool& reliable,
                                       double window_factor = 5.0);

/// One binary series per coordinate, all the same length.
ChainDiagnostics estimate_iact(const std::vector<std::vector<std::uint8_t>>& series, int max_thinning);

/// Structured-text (JSON) report of chain diagnostics.
std::string diagnostics_report(const ChainDiagnostics& diagnostics);

std::vector<double> posterior_marginals(const PosteriorSamples& samples);

/// Exact posterior table over all 2^N states; index bit i is theta_i.
struct ExactPosterior {
  int n_individuals = 0;
  std::vector<double> probabilities;
  double log_evidence = 0.0;  // log Pr(data | design)

  std::vector<double> marginals() const;
};

inline constexpr int kMaxExactIndividuals = 20;

ExactPosterior exact_posterior(const Model& model, const Design& design, const TestData& data);

/// Joint entropy in nats.
double posterior_entropy(const ExactPosterior& posterior);

struct EntropyEstimate {
  double nats = 0.0;
  bool upper_bound_proxy = true;  // sum of marginal entropies, not the joint
};

EntropyEstimate posterior_entropy(const PosteriorSamples& samples);

/// Sum of binary entropies of the given marginals.
double marginal_entropy_sum(std::span<const double> marginals);

}  // namespace dope
