#include "dope/baselines.hpp"

#include <algorithm>

#include "dope/errors.hpp"

namespace dope {

namespace {

class Tester {
 public:
  Tester(const InfectionState& truth, const TestErrorParams& err, Rng& rng, StrategyOutcome& out)
      : truth_(truth), err_(err), rng_(rng), out_(out) {}

  bool test(const Pool& pool) {
    const bool positive = sample_pool_result(pool, err_, truth_, rng_);
    out_.pools.push_back(pool);
    out_.results.push_back(positive);
    ++out_.tests_used;
    return positive;
  }

 private:
  const InfectionState& truth_;
  const TestErrorParams& err_;
  Rng& rng_;
  StrategyOutcome& out_;
};

Pool range_pool(int begin, int end) {
  std::uint64_t mask = 0;
  for (int i = begin; i < end; ++i) mask |= 1ULL << i;
  return Pool(mask);
}

void split_test(Tester& tester, int begin, int end, std::vector<std::uint8_t>& cls) {
  // The pool [begin, end) has already tested positive.
  if (end - begin == 1) {
    cls[begin] = 1;
    return;
  }
  const int mid = begin + (end - begin + 1) / 2;
  const bool left = tester.test(range_pool(begin, mid));
  const bool right = tester.test(range_pool(mid, end));
  if (left) split_test(tester, begin, mid, cls);
  if (right) split_test(tester, mid, end, cls);
}

}  // namespace

void DorfmanConfig::validate() const {
  if (pool_size < 1 || pool_size > kMaxPoolSize) throw validation_error("pool_size", "pool_size must be in [1, 32]");
}

void RecursiveConfig::validate() const {
  if (initial_pool_size < 1 || initial_pool_size > kMaxPoolSize)
    throw validation_error("initial_pool_size", "initial_pool_size must be in [1, 32]");
}

void MatrixConfig::validate(int n_individuals) const {
  if (rows < 1 || cols < 1 || rows > kMaxPoolSize || cols > kMaxPoolSize)
    throw validation_error("matrix", "rows and cols must be in [1, 32]");
  if (rows * cols != n_individuals) throw validation_error("matrix", "rows * cols must equal the population size");
}

std::vector<TranscriptRecord> StrategyOutcome::transcript() const {
  std::vector<TranscriptRecord> out;
  for (std::size_t k = 0; k < pools.size(); ++k)
    out.push_back({.kind = "test", .round = static_cast<int>(k) + 1, .pools = Design{pools[k]},
                   .results = TestData{results[k]}});
  return out;
}

StrategyOutcome dorfman_run(const InfectionState& truth, const TestErrorParams& err, const DorfmanConfig& cfg,
                            Rng& rng) {
  cfg.validate();
  const int n = truth.size();
  StrategyOutcome out;
  out.classification.assign(n, 0);
  Tester tester(truth, err, rng, out);
  for (int begin = 0; begin < n; begin += cfg.pool_size) {
    const int end = std::min(n, begin + cfg.pool_size);
    if (!tester.test(range_pool(begin, end))) continue;
    for (int i = begin; i < end; ++i) out.classification[i] = tester.test(Pool(1ULL << i));
  }
  return out;
}

StrategyOutcome recursive_run(const InfectionState& truth, const TestErrorParams& err, const RecursiveConfig& cfg,
                              Rng& rng) {
  cfg.validate();
  const int n = truth.size();
  StrategyOutcome out;
  out.classification.assign(n, 0);
  Tester tester(truth, err, rng, out);
  for (int begin = 0; begin < n; begin += cfg.initial_pool_size) {
    const int end = std::min(n, begin + cfg.initial_pool_size);
    if (tester.test(range_pool(begin, end))) split_test(tester, begin, end, out.classification);
  }
  return out;
}

StrategyOutcome matrix_run(const InfectionState& truth, const TestErrorParams& err, const MatrixConfig& cfg,
                           Rng& rng) {
  const int n = truth.size();
  cfg.validate(n);
  StrategyOutcome out;
  out.classification.assign(n, 0);
  Tester tester(truth, err, rng, out);
  std::vector<bool> row_positive(cfg.rows), col_positive(cfg.cols);
  for (int r = 0; r < cfg.rows; ++r) row_positive[r] = tester.test(range_pool(r * cfg.cols, (r + 1) * cfg.cols));
  for (int c = 0; c < cfg.cols; ++c) {
    std::uint64_t mask = 0;
    for (int r = 0; r < cfg.rows; ++r) mask |= 1ULL << (r * cfg.cols + c);
    col_positive[c] = tester.test(Pool(mask));
  }
  for (int r = 0; r < cfg.rows; ++r)
    for (int c = 0; c < cfg.cols; ++c)
      if (row_positive[r] && col_positive[c]) {
        const int i = r * cfg.cols + c;
        out.classification[i] = tester.test(Pool(1ULL << i));
      }
  return out;
}

StrategyOutcome separate_run(const InfectionState& truth, const TestErrorParams& err, Rng& rng) {
  const int n = truth.size();
  StrategyOutcome out;
  out.classification.assign(n, 0);
  Tester tester(truth, err, rng, out);
  for (int i = 0; i < n; ++i) out.classification[i] = tester.test(Pool(1ULL << i));
  return out;
}

}  // namespace dope
