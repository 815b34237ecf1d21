#pragma once

// Mutual information between infection states and pooled-test outcomes for a
// candidate design, estimated by nested Monte Carlo over posterior samples, and
// a random-restart hill climber over K-pool designs.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dope/model.hpp"
#include "dope/posterior.hpp"

namespace dope {

struct MIEstimate {
  double value = 0.0;    // nats
  int n_samples = 0;
  double se_hint = 0.0;  // spread of the per-sample terms over sqrt(L)
};

enum class MiMethod {
  grouped,   // L^2 sum evaluated once per distinct pool-count pattern
  pairwise,  // literal L^2 loop
};

inline constexpr int kMaxPoolsPerEstimate = 64;

/// Infected-member counts per (sample, pool).
class PoolCountMatrix {
 public:
  PoolCountMatrix(std::span<const InfectionState> samples, const Design& design);
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int operator()(int r, int j) const { return counts_[static_cast<std::size_t>(r) * cols_ + j]; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<std::uint8_t> counts_;
};

/// Nested Monte-Carlo estimator bound to a sample set and an outcome seed.
///
/// Outcome Y_k for pool j is 1 iff u(k, j) < Pr(positive | count), where the
/// uniforms are a counter-based function of (seed, k, j). Every design scored
/// by the same estimator therefore sees common random numbers, and a larger
/// sample set extends a smaller one.
class MiEstimator {
 public:
  MiEstimator(std::span<const InfectionState> samples, const TestErrorParams& err, std::uint64_t outcome_seed);

  MIEstimate evaluate(const Design& design, MiMethod method = MiMethod::grouped) const;

  /// Sampled outcomes, one bit per pool (bit j = pool j).
  std::vector<std::uint64_t> outcomes(const Design& design) const;
  /// log Pr(Y_k | eta_k, design) per sample.
  std::vector<double> own_log_likelihoods(const Design& design) const;

  int n_samples() const { return static_cast<int>(sample_to_distinct_.size()); }
  std::uint64_t outcome_seed() const { return seed_; }

 private:
  double uniform(int k, int j) const;

  TestErrorParams err_;
  std::uint64_t seed_;
  std::vector<std::uint64_t> distinct_;      // distinct sample states
  std::vector<int> multiplicity_;            // per distinct state
  std::vector<int> sample_to_distinct_;      // per sample
};

/// Draws an outcome seed from `rng` and evaluates the estimator.
MIEstimate estimate_mi(const Design& candidate, const PosteriorSamples& samples, const TestErrorParams& err,
                       Rng& rng, MiMethod method = MiMethod::grouped);

inline constexpr int kMaxExactMiIndividuals = 16;
inline constexpr int kMaxExactMiPools = 12;

/// Mutual information by direct summation over states and outcome vectors.
double exact_mi(const Design& candidate, const ExactPosterior& distribution, const TestErrorParams& err);

enum class MoveKind { add, remove, swap, none };

struct Perturbation {
  Design design;
  MoveKind move = MoveKind::none;
};

/// One random add/remove/swap move on a uniformly chosen pool. Illegal draws
/// are retried up to 100 times, after which the design is returned unchanged.
Perturbation perturb_with_move(const Design& design, const PopulationSpec& spec, Rng& rng,
                               bool enforce_cap = true);
Design perturb(const Design& design, const PopulationSpec& spec, Rng& rng, bool enforce_cap = true);

/// K pools, each of uniform size in {1..min(N, 32)} with members drawn without replacement.
Design random_design(int k_pools, int n_individuals, Rng& rng, bool enforce_cap = true);

struct HillClimbConfig {
  int n_restarts = 10;
  int n_perturbations = 32;
  int max_steps = 100;
  std::uint64_t seed = 0;
  int workers = 1;

  void validate() const;
};

struct SearchStep {
  int restart = 0;
  int step = 0;
  double best_value = 0.0;
  bool accepted = false;
  MoveKind move = MoveKind::none;
};

struct DesignSearchResult {
  Design design;
  MIEstimate estimate;
  std::vector<SearchStep> trace;
};

DesignSearchResult optimal_design(int k_pools, const PosteriorSamples& samples, const TestErrorParams& err,
                                  const PopulationSpec& spec, const HillClimbConfig& config,
                                  bool enforce_cap = true);

/// Structured-text (JSON) export of a search trace.
std::string search_trace_report(const DesignSearchResult& result);

const char* move_name(MoveKind move);

}  // namespace dope
