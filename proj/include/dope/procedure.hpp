#pragma once

// The sequential pooling loop: propose K pools that maximize estimated mutual
// information under the current posterior, observe their results, update the
// posterior, and repeat until no posterior marginal lies inside the decision
// interval.
//
// Seed schedule: every random stream of a round is derived from the session
// seed and the number of pools accumulated so far, so a session's trajectory
// depends only on (seed, configuration, results entered).

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "dope/design.hpp"
#include "dope/model.hpp"
#include "dope/posterior.hpp"
#include "dope/transcript.hpp"

namespace dope {

struct DecisionInterval {
  double lower = 0.0;
  double upper = 0.0;
  bool empty = false;

  static DecisionInterval none() { return {0.0, 0.0, true}; }
  static DecisionInterval closed(double lower, double upper);

  bool contains(double p) const { return !empty && p >= lower && p <= upper; }
  void validate() const;
  friend bool operator==(const DecisionInterval&, const DecisionInterval&) = default;
};

struct DopeConfig {
  int k_pools_per_step = 1;
  DecisionInterval interval = DecisionInterval::closed(0.05, 0.9);
  GibbsConfig gibbs;
  HillClimbConfig hill_climb;
  int max_rounds = 0;  // 0 selects 10 * N / K
  std::uint64_t seed = 0;

  int effective_max_rounds(int n_individuals) const;
  void validate() const;
};

struct SessionState {
  Design design;
  TestData data;
  std::vector<double> marginals;
  int round = 0;
  bool stopped = false;
  std::optional<std::vector<std::uint8_t>> classification;
  // Samples conditioned on (design, data); reused by the next proposal.
  std::shared_ptr<const PosteriorSamples> samples;
};

/// Posterior samples for the state's (design, data): prior draws when empty.
std::shared_ptr<const PosteriorSamples> condition(const Design& design, const TestData& data,
                                                  const DopeConfig& config, const Model& model);

/// Refreshes state.marginals and returns the next K pools.
Design propose(SessionState& state, const DopeConfig& config, const Model& model);
DesignSearchResult propose_with_trace(SessionState& state, const DopeConfig& config, const Model& model);

/// Appends the pools and results, recomputes the marginals and sets the
/// stopping flag (and classification once stopped).
SessionState ingest(SessionState state, const Design& new_design, const TestData& new_data,
                    const DopeConfig& config, const Model& model);

/// True iff no marginal lies in the interval; vacuously true for an empty interval.
bool should_stop(std::span<const double> marginals, const DecisionInterval& interval);

/// marginal > 0.5 classifies positive; exactly 0.5 is negative.
std::vector<std::uint8_t> classify(std::span<const double> marginals);

class TestExecutor {
 public:
  virtual ~TestExecutor() = default;
  virtual TestData execute(const Design& design, int round) = 0;
};

/// Draws results for a hidden true state; round r uses its own derived stream.
class SimulationExecutor : public TestExecutor {
 public:
  SimulationExecutor(InfectionState truth, TestErrorParams err, std::uint64_t seed)
      : truth_(truth), err_(err), seed_(seed) {}
  TestData execute(const Design& design, int round) override;
  const InfectionState& truth() const { return truth_; }

 private:
  InfectionState truth_;
  TestErrorParams err_;
  std::uint64_t seed_;
};

struct DopeOutcome {
  std::vector<std::uint8_t> classification;
  int tests_used = 0;
  int rounds = 0;
  bool truncated = false;
  SessionState final_state;
  std::vector<TranscriptRecord> transcript;
};

/// Called after every ingest with the updated state.
using RoundObserver = std::function<void(const SessionState&)>;

DopeOutcome run(const DopeConfig& config, TestExecutor& executor, const Model& model,
                const RoundObserver& observer = {});

}  // namespace dope
