#include "dope/procedure.hpp"

#include <stdexcept>

#include "dope/errors.hpp"

namespace dope {

DecisionInterval DecisionInterval::closed(double lower, double upper) {
  DecisionInterval i{lower, upper, false};
  i.validate();
  return i;
}

void DecisionInterval::validate() const {
  if (empty) return;
  if (!(lower >= 0.0 && lower <= 1.0)) throw validation_error("interval.lower", "lower bound must lie in [0, 1]");
  if (!(upper >= 0.0 && upper <= 1.0)) throw validation_error("interval.upper", "upper bound must lie in [0, 1]");
  if (!(lower < upper)) throw validation_error("interval", "lower bound must be below the upper bound");
}

int DopeConfig::effective_max_rounds(int n_individuals) const {
  if (max_rounds > 0) return max_rounds;
  return std::max(1, (10 * n_individuals + k_pools_per_step - 1) / k_pools_per_step);
}

void DopeConfig::validate() const {
  if (k_pools_per_step < 1) throw validation_error("k_pools_per_step", "k_pools_per_step must be at least 1");
  if (k_pools_per_step > kMaxPoolsPerEstimate)
    throw validation_error("k_pools_per_step", "k_pools_per_step must be at most 64");
  if (max_rounds < 0) throw validation_error("max_rounds", "max_rounds must be nonnegative");
  interval.validate();
  gibbs.validate();
  hill_climb.validate();
}

std::shared_ptr<const PosteriorSamples> condition(const Design& design, const TestData& data,
                                                  const DopeConfig& config, const Model& model) {
  const auto key = static_cast<std::uint64_t>(design.size());
  const std::uint64_t seed = derive_seed(config.seed, {stream::gibbs, key});
  if (design.empty()) return std::make_shared<PosteriorSamples>(prior_samples(model, config.gibbs.n_samples, seed));
  GibbsConfig gibbs = config.gibbs;
  gibbs.seed = seed;
  return std::make_shared<PosteriorSamples>(gibbs_run(gibbs, design, data, model));
}

namespace {

void ensure_samples(SessionState& state, const DopeConfig& config, const Model& model) {
  if (!state.samples || state.samples->design.size() != state.design.size()) {
    state.samples = condition(state.design, state.data, config, model);
    state.marginals = posterior_marginals(*state.samples);
  }
}

}  // namespace

DesignSearchResult propose_with_trace(SessionState& state, const DopeConfig& config, const Model& model) {
  if (state.stopped) throw std::logic_error("cannot propose for a stopped session");
  ensure_samples(state, config, model);
  HillClimbConfig hc = config.hill_climb;
  hc.seed = derive_seed(config.seed, {stream::design, static_cast<std::uint64_t>(state.design.size())});
  return optimal_design(config.k_pools_per_step, *state.samples, model.errors, model.population, hc,
                        model.enforce_pool_cap);
}

Design propose(SessionState& state, const DopeConfig& config, const Model& model) {
  return propose_with_trace(state, config, model).design;
}

SessionState ingest(SessionState state, const Design& new_design, const TestData& new_data,
                    const DopeConfig& config, const Model& model) {
  if (new_design.size() != new_data.size()) throw std::invalid_argument("results length does not match design");
  if (new_design.empty()) return state;
  validate_design(new_design, model.n(), model.enforce_pool_cap);
  state.design.insert(state.design.end(), new_design.begin(), new_design.end());
  state.data.insert(state.data.end(), new_data.begin(), new_data.end());
  ++state.round;
  state.samples = condition(state.design, state.data, config, model);
  state.marginals = posterior_marginals(*state.samples);
  state.stopped = should_stop(state.marginals, config.interval);
  if (state.stopped) state.classification = classify(state.marginals);
  return state;
}

bool should_stop(std::span<const double> marginals, const DecisionInterval& interval) {
  for (double m : marginals)
    if (interval.contains(m)) return false;
  return true;
}

std::vector<std::uint8_t> classify(std::span<const double> marginals) {
  std::vector<std::uint8_t> out(marginals.size());
  for (std::size_t i = 0; i < marginals.size(); ++i) out[i] = marginals[i] > 0.5;
  return out;
}

TestData SimulationExecutor::execute(const Design& design, int round) {
  Rng rng(derive_seed(seed_, {stream::executor, static_cast<std::uint64_t>(round)}));
  return sample_data(design, err_, truth_, rng);
}

DopeOutcome run(const DopeConfig& config, TestExecutor& executor, const Model& model, const RoundObserver& observer) {
  config.validate();
  const int max_rounds = config.effective_max_rounds(model.n());
  DopeOutcome out;
  SessionState state;
  while (true) {
    const int round = state.round + 1;
    const Design proposal = propose(state, config, model);
    out.transcript.push_back({.kind = "proposal", .round = round, .pools = proposal, .marginals = state.marginals});
    const TestData results = executor.execute(proposal, round);
    if (results.size() != proposal.size()) throw std::runtime_error("executor returned the wrong number of results");
    out.transcript.push_back({.kind = "results", .round = round, .results = results});
    state = ingest(std::move(state), proposal, results, config, model);
    out.transcript.push_back({.kind = "update",
                              .round = round,
                              .marginals = state.marginals,
                              .stopped = state.stopped,
                              .classification = state.classification});
    if (observer) observer(state);
    if (state.stopped) break;
    if (state.round >= max_rounds) {
      out.truncated = true;
      break;
    }
  }
  out.classification = classify(state.marginals);
  state.classification = out.classification;
  out.tests_used = static_cast<int>(state.design.size());
  out.rounds = state.round;
  out.final_state = std::move(state);
  return out;
}

}  // namespace dope
