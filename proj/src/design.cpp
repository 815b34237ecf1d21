#include "dope/design.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "dope/errors.hpp"
#include "dope/json_io.hpp"
#include "ext_log.hpp"

namespace dope {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t uniform_index(Rng& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

int pick_bit(std::uint64_t mask, Rng& rng) {
  const int n = std::popcount(mask);
  int target = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(n)));
  for (std::uint64_t m = mask;; m &= m - 1)
    if (target-- == 0) return std::countr_zero(m);
}

std::uint64_t population_mask(int n) { return n >= 64 ? ~0ULL : ((1ULL << n) - 1); }

// Running log-sum-exp.
struct LogAccumulator {
  double max = kNegInf;
  double scaled = 0.0;
  void add(double x) {
    if (x == kNegInf) return;
    if (x <= max) {
      scaled += std::exp(x - max);
    } else {
      scaled = scaled * std::exp(max - x) + 1.0;
      max = x;
    }
  }
  double value() const { return max == kNegInf ? kNegInf : max + std::log(scaled); }
};

void check_design_size(const Design& design) {
  if (design.size() > static_cast<std::size_t>(kMaxPoolsPerEstimate))
    throw std::invalid_argument("at most 64 pools per mutual-information estimate");
}

}  // namespace

const char* move_name(MoveKind move) {
  switch (move) {
    case MoveKind::add: return "add";
    case MoveKind::remove: return "remove";
    case MoveKind::swap: return "swap";
    case MoveKind::none: return "none";
  }
  return "none";
}

PoolCountMatrix::PoolCountMatrix(std::span<const InfectionState> samples, const Design& design)
    : rows_(static_cast<int>(samples.size())), cols_(static_cast<int>(design.size())),
      counts_(samples.size() * design.size()) {
  for (int r = 0; r < rows_; ++r)
    for (int j = 0; j < cols_; ++j)
      counts_[static_cast<std::size_t>(r) * cols_ + j] = static_cast<std::uint8_t>(design[j].infected_count(samples[r]));
}

MiEstimator::MiEstimator(std::span<const InfectionState> samples, const TestErrorParams& err,
                         std::uint64_t outcome_seed)
    : err_(err), seed_(outcome_seed) {
  if (samples.size() < 2) throw std::invalid_argument("mutual-information estimate needs at least 2 samples");
  std::unordered_map<std::uint64_t, int> index;
  sample_to_distinct_.reserve(samples.size());
  for (const auto& s : samples) {
    auto [it, inserted] = index.try_emplace(s.bits(), static_cast<int>(distinct_.size()));
    if (inserted) {
      distinct_.push_back(s.bits());
      multiplicity_.push_back(0);
    }
    ++multiplicity_[it->second];
    sample_to_distinct_.push_back(it->second);
  }
}

double MiEstimator::uniform(int k, int j) const {
  return to_unit(mix64(seed_ ^ mix64((static_cast<std::uint64_t>(k) << 6) | static_cast<std::uint64_t>(j))));
}

std::vector<std::uint64_t> MiEstimator::outcomes(const Design& design) const {
  check_design_size(design);
  const detail::LikelihoodTable table(err_);
  std::vector<std::uint64_t> out(sample_to_distinct_.size(), 0);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const InfectionState s(64, distinct_[sample_to_distinct_[k]]);
    for (std::size_t j = 0; j < design.size(); ++j)
      if (uniform(static_cast<int>(k), static_cast<int>(j)) < table.p_positive[design[j].infected_count(s)])
        out[k] |= 1ULL << j;
  }
  return out;
}

std::vector<double> MiEstimator::own_log_likelihoods(const Design& design) const {
  const auto y = outcomes(design);
  const detail::LikelihoodTable table(err_);
  std::vector<double> out(y.size(), 0.0);
  for (std::size_t k = 0; k < y.size(); ++k) {
    const InfectionState s(64, distinct_[sample_to_distinct_[k]]);
    for (std::size_t j = 0; j < design.size(); ++j)
      out[k] += table.log_factor(design[j].infected_count(s), (y[k] >> j) & 1ULL);
  }
  return out;
}

MIEstimate MiEstimator::evaluate(const Design& design, MiMethod method) const {
  check_design_size(design);
  const int L = n_samples();
  const int K = static_cast<int>(design.size());
  MIEstimate out;
  out.n_samples = L;
  if (K == 0) return out;
  const detail::LikelihoodTable table(err_);
  const double log_l = std::log(static_cast<double>(L));

  // Pool counts per distinct state, grouped into distinct count patterns.
  const int U = static_cast<int>(distinct_.size());
  std::vector<int> pattern_of(U);
  std::vector<std::uint8_t> patterns;  // P x K
  std::vector<double> weight;          // multiplicity per pattern
  {
    std::unordered_map<std::string, int> index;
    std::string key(static_cast<std::size_t>(K), '\0');
    for (int u = 0; u < U; ++u) {
      const InfectionState s(64, distinct_[u]);
      for (int j = 0; j < K; ++j) key[j] = static_cast<char>(design[j].infected_count(s));
      auto [it, inserted] = index.try_emplace(key, static_cast<int>(weight.size()));
      if (inserted) {
        patterns.insert(patterns.end(), key.begin(), key.end());
        weight.push_back(0.0);
      }
      weight[it->second] += multiplicity_[u];
      pattern_of[u] = it->second;
    }
  }
  const int P = static_cast<int>(weight.size());
  std::vector<double> log_weight(P);
  for (int p = 0; p < P; ++p) log_weight[p] = std::log(weight[p]);

  std::unique_ptr<PoolCountMatrix> matrix;
  std::vector<InfectionState> expanded;
  if (method == MiMethod::pairwise) {
    expanded.reserve(L);
    for (int k = 0; k < L; ++k) expanded.emplace_back(64, distinct_[sample_to_distinct_[k]]);
    matrix = std::make_unique<PoolCountMatrix>(expanded, design);
  }

  std::unordered_map<std::uint64_t, double> log_evidence;
  auto evidence_grouped = [&](std::uint64_t y) {
    auto it = log_evidence.find(y);
    if (it != log_evidence.end()) return it->second;
    LogAccumulator acc;
    for (int p = 0; p < P; ++p) {
      double lp = log_weight[p];
      const std::uint8_t* c = &patterns[static_cast<std::size_t>(p) * K];
      for (int j = 0; j < K && lp != kNegInf; ++j) lp += table.log_factor(c[j], (y >> j) & 1ULL);
      acc.add(lp);
    }
    const double v = acc.value() - log_l;
    log_evidence.emplace(y, v);
    return v;
  };
  auto evidence_pairwise = [&](std::uint64_t y) {
    LogAccumulator acc;
    for (int r = 0; r < L; ++r) {
      double lp = 0.0;
      for (int j = 0; j < K && lp != kNegInf; ++j) lp += table.log_factor((*matrix)(r, j), (y >> j) & 1ULL);
      acc.add(lp);
    }
    return acc.value() - log_l;
  };

  double sum = 0.0, sum_sq = 0.0;
  for (int k = 0; k < L; ++k) {
    const std::uint8_t* c = &patterns[static_cast<std::size_t>(pattern_of[sample_to_distinct_[k]]) * K];
    std::uint64_t y = 0;
    double own = 0.0;
    for (int j = 0; j < K; ++j) {
      const bool positive = uniform(k, j) < table.p_positive[c[j]];
      if (positive) y |= 1ULL << j;
      own += table.log_factor(c[j], positive);
    }
    const double term = own - (method == MiMethod::grouped ? evidence_grouped(y) : evidence_pairwise(y));
    sum += term;
    sum_sq += term * term;
  }
  out.value = sum / L;
  const double var = std::max(0.0, sum_sq / L - out.value * out.value);
  out.se_hint = std::sqrt(var / L);
  return out;
}

MIEstimate estimate_mi(const Design& candidate, const PosteriorSamples& samples, const TestErrorParams& err,
                       Rng& rng, MiMethod method) {
  const MiEstimator estimator(samples.states, err, rng());
  return estimator.evaluate(candidate, method);
}

double exact_mi(const Design& candidate, const ExactPosterior& distribution, const TestErrorParams& err) {
  if (distribution.n_individuals > kMaxExactMiIndividuals)
    throw budget_exceeded("exact mutual information limited to 16 individuals");
  if (candidate.size() > static_cast<std::size_t>(kMaxExactMiPools))
    throw budget_exceeded("exact mutual information limited to 12 pools");
  const int K = static_cast<int>(candidate.size());
  if (K == 0) return 0.0;
  const detail::LikelihoodTable table(err);

  std::map<std::vector<std::uint8_t>, double> pattern_mass;
  std::vector<std::uint8_t> key(K);
  for (std::size_t s = 0; s < distribution.probabilities.size(); ++s) {
    const double p = distribution.probabilities[s];
    if (p <= 0.0) continue;
    const InfectionState state(distribution.n_individuals, s);
    for (int j = 0; j < K; ++j) key[j] = static_cast<std::uint8_t>(candidate[j].infected_count(state));
    pattern_mass[key] += p;
  }

  const std::size_t n_outcomes = std::size_t{1} << K;
  std::vector<std::vector<double>> lik;  // per pattern, per outcome
  std::vector<double> evidence(n_outcomes, 0.0);
  for (const auto& [pattern, mass] : pattern_mass) {
    std::vector<double> row(n_outcomes);
    for (std::size_t d = 0; d < n_outcomes; ++d) {
      double l = 1.0;
      for (int j = 0; j < K; ++j) l *= std::exp(table.log_factor(pattern[j], (d >> j) & 1U));
      row[d] = l;
      evidence[d] += mass * l;
    }
    lik.push_back(std::move(row));
  }
  double mi = 0.0;
  std::size_t idx = 0;
  for (const auto& [pattern, mass] : pattern_mass) {
    const auto& row = lik[idx++];
    for (std::size_t d = 0; d < n_outcomes; ++d)
      if (row[d] > 0.0) mi += mass * row[d] * (std::log(row[d]) - std::log(evidence[d]));
  }
  return std::max(mi, 0.0);
}

Perturbation perturb_with_move(const Design& design, const PopulationSpec& spec, Rng& rng, bool enforce_cap) {
  const int n = spec.n_individuals;
  if (design.empty()) return {design, MoveKind::none};
  const int cap = enforce_cap ? std::min(n, kMaxPoolSize) : n;
  const std::uint64_t everyone = population_mask(n);
  for (int attempt = 0; attempt < 100; ++attempt) {
    const auto move = static_cast<MoveKind>(uniform_index(rng, 3));
    const std::size_t which = uniform_index(rng, design.size());
    const std::uint64_t mask = design[which].mask();
    const int size = std::popcount(mask);
    std::uint64_t next = mask;
    switch (move) {
      case MoveKind::add:
        if (size >= cap) continue;
        next |= 1ULL << pick_bit(everyone & ~mask, rng);
        break;
      case MoveKind::remove:
        if (size < 2) continue;
        next &= ~(1ULL << pick_bit(mask, rng));
        break;
      case MoveKind::swap: {
        if (size >= n) continue;
        const int out = pick_bit(mask, rng);
        const int in = pick_bit(everyone & ~mask, rng);
        next = (next & ~(1ULL << out)) | (1ULL << in);
        break;
      }
      case MoveKind::none: continue;
    }
    Design result = design;
    result[which] = Pool(next);
    return {std::move(result), move};
  }
  return {design, MoveKind::none};
}

Design perturb(const Design& design, const PopulationSpec& spec, Rng& rng, bool enforce_cap) {
  return perturb_with_move(design, spec, rng, enforce_cap).design;
}

Design random_design(int k_pools, int n_individuals, Rng& rng, bool enforce_cap) {
  const int max_size = enforce_cap ? std::min(n_individuals, kMaxPoolSize) : n_individuals;
  std::vector<int> order(n_individuals);
  Design design;
  design.reserve(k_pools);
  for (int k = 0; k < k_pools; ++k) {
    const int size = 1 + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(max_size)));
    std::iota(order.begin(), order.end(), 0);
    std::uint64_t mask = 0;
    for (int m = 0; m < size; ++m) {
      const std::size_t pick = m + uniform_index(rng, static_cast<std::size_t>(n_individuals - m));
      std::swap(order[m], order[pick]);
      mask |= 1ULL << order[m];
    }
    design.emplace_back(mask);
  }
  return design;
}

void HillClimbConfig::validate() const {
  if (n_restarts < 1) throw validation_error("n_restarts", "n_restarts must be at least 1");
  if (n_perturbations < 1) throw validation_error("n_perturbations", "n_perturbations must be at least 1");
  if (max_steps < 1) throw validation_error("max_steps", "max_steps must be at least 1");
  if (workers < 1) throw validation_error("workers", "workers must be at least 1");
}

namespace {

struct RestartResult {
  Design design;
  double value = kNegInf;
  std::vector<SearchStep> trace;
};

std::vector<std::uint64_t> design_key(const Design& d) {
  std::vector<std::uint64_t> key(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) key[i] = d[i].mask();
  return key;
}

RestartResult climb(int restart, int k_pools, const MiEstimator& estimator, const PopulationSpec& spec,
                    const HillClimbConfig& config, bool enforce_cap) {
  Rng rng(derive_seed(config.seed, {stream::design, static_cast<std::uint64_t>(restart)}));
  std::map<std::vector<std::uint64_t>, double> memo;
  auto score = [&](const Design& d) {
    auto key = design_key(d);
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    const double v = estimator.evaluate(d).value;
    memo.emplace(std::move(key), v);
    return v;
  };

  RestartResult r;
  r.design = random_design(k_pools, spec.n_individuals, rng, enforce_cap);
  r.value = score(r.design);
  r.trace.push_back({restart, 0, r.value, true, MoveKind::none});
  for (int step = 1; step <= config.max_steps; ++step) {
    Perturbation best;
    double best_value = kNegInf;
    for (int p = 0; p < config.n_perturbations; ++p) {
      Perturbation candidate = perturb_with_move(r.design, spec, rng, enforce_cap);
      const double v = score(candidate.design);
      if (v > best_value) {
        best_value = v;
        best = std::move(candidate);
      }
    }
    const bool improved = best_value > r.value;
    if (improved) {
      r.design = std::move(best.design);
      r.value = best_value;
    }
    r.trace.push_back({restart, step, r.value, improved, improved ? best.move : MoveKind::none});
    if (!improved) break;
  }
  return r;
}

}  // namespace

DesignSearchResult optimal_design(int k_pools, const PosteriorSamples& samples, const TestErrorParams& err,
                                  const PopulationSpec& spec, const HillClimbConfig& config, bool enforce_cap) {
  if (k_pools < 1) throw std::invalid_argument("k_pools must be at least 1");
  config.validate();
  const MiEstimator estimator(samples.states, err, derive_seed(config.seed, {stream::evaluation}));

  std::vector<RestartResult> results(config.n_restarts);
  const int workers = std::min(config.workers, config.n_restarts);
  if (workers <= 1) {
    for (int r = 0; r < config.n_restarts; ++r)
      results[r] = climb(r, k_pools, estimator, spec, config, enforce_cap);
  } else {
    std::atomic<int> next{0};
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int r = next++; r < config.n_restarts; r = next++)
          results[r] = climb(r, k_pools, estimator, spec, config, enforce_cap);
      });
  }

  std::size_t best = 0;
  for (std::size_t r = 1; r < results.size(); ++r)
    if (results[r].value > results[best].value) best = r;

  DesignSearchResult out;
  out.design = results[best].design;
  out.estimate = estimator.evaluate(out.design);
  for (auto& r : results) out.trace.insert(out.trace.end(), r.trace.begin(), r.trace.end());
  return out;
}

std::string search_trace_report(const DesignSearchResult& result) {
  ordered_json steps = ordered_json::array();
  for (const auto& s : result.trace) {
    ordered_json j;
    j["restart"] = s.restart;
    j["step"] = s.step;
    j["best_value"] = s.best_value;
    j["accepted"] = s.accepted;
    j["move"] = move_name(s.move);
    steps.push_back(std::move(j));
  }
  ordered_json out;
  out["design"] = design_to_json(result.design);
  out["mi"] = result.estimate.value;
  out["n_samples"] = result.estimate.n_samples;
  out["se_hint"] = result.estimate.se_hint;
  out["trace"] = std::move(steps);
  return out.dump(2);
}

}  // namespace dope
