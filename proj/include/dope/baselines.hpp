#pragma once

// Reference pooling strategies run against a hidden true state. Every test is
// drawn through the shared pooled-test likelihood (sample_pool_result).

#include <vector>

#include "dope/model.hpp"
#include "dope/transcript.hpp"

namespace dope {

struct DorfmanConfig {
  int pool_size = 8;
  void validate() const;
};

struct RecursiveConfig {
  int initial_pool_size = 8;
  void validate() const;
};

struct MatrixConfig {
  int rows = 4;
  int cols = 8;
  void validate(int n_individuals) const;
};

struct StrategyOutcome {
  std::vector<std::uint8_t> classification;
  int tests_used = 0;
  Design pools;    // in the order tested
  TestData results;

  /// One "test" record per pooled test.
  std::vector<TranscriptRecord> transcript() const;
};

/// Consecutive pools of pool_size; members of positive pools are retested
/// individually and take their individual result. A positive pool whose
/// members all test negative leaves them all negative.
StrategyOutcome dorfman_run(const InfectionState& truth, const TestErrorParams& err, const DorfmanConfig& cfg,
                            Rng& rng);

/// Consecutive initial pools; a positive pool of size k > 1 is split into
/// ceil(k/2) then floor(k/2) and both halves are tested. Only singletons that
/// test positive are classified positive.
StrategyOutcome recursive_run(const InfectionState& truth, const TestErrorParams& err, const RecursiveConfig& cfg,
                              Rng& rng);

/// Individual i sits at row i / cols, column i % cols. All rows and columns are
/// tested; positive-row x positive-column intersections are retested
/// individually. Everyone else, including members of a positive row with no
/// positive column, is negative.
StrategyOutcome matrix_run(const InfectionState& truth, const TestErrorParams& err, const MatrixConfig& cfg,
                           Rng& rng);

StrategyOutcome separate_run(const InfectionState& truth, const TestErrorParams& err, Rng& rng);

}  // namespace dope
