#include "dope/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <thread>

#include "dope/errors.hpp"

namespace dope {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Cell {
  int tests = 0;
  int false_negatives = 0;
  int false_positives = 0;
  double entropy = kNaN;
  bool entropy_exact = false;
  bool truncated = false;
};

struct ReplicateResult {
  int infected = 0;
  std::vector<Cell> cells;  // row order
};

void score(Cell& cell, const InfectionState& truth, std::span<const std::uint8_t> cls) {
  for (int i = 0; i < truth.size(); ++i) {
    if (truth[i] && !cls[i]) ++cell.false_negatives;
    if (!truth[i] && cls[i]) ++cell.false_positives;
  }
}

void posterior_entropy_of(Cell& cell, const Model& model, const Design& design, const TestData& data) {
  if (model.n() > kMaxExactIndividuals) return;
  cell.entropy = posterior_entropy(exact_posterior(model, design, data));
  cell.entropy_exact = true;
}

DecisionInterval hull(const std::vector<DecisionInterval>& grid) {
  DecisionInterval h = DecisionInterval::none();
  for (const auto& i : grid) {
    if (i.empty) continue;
    if (h.empty) {
      h = i;
    } else {
      h.lower = std::min(h.lower, i.lower);
      h.upper = std::max(h.upper, i.upper);
    }
  }
  return h;
}

struct RoundSnapshot {
  std::vector<double> marginals;
  int tests = 0;
  double entropy = kNaN;
  bool exact = false;
};

// One trajectory under the hull of the grid serves every interval in it: the
// trajectory does not depend on the interval until the run stops.
void run_dope_cells(const ScenarioConfig& cfg, const StrategyConfig& s, const InfectionState& truth,
                    std::uint64_t seed, std::vector<Cell>& cells) {
  DopeConfig dc;
  dc.k_pools_per_step = s.k_pools_per_step;
  dc.interval = hull(cfg.interval_grid);
  dc.gibbs = s.gibbs;
  dc.gibbs.n_samples = cfg.mc_samples;
  dc.hill_climb = s.hill_climb;
  dc.max_rounds = s.max_rounds;
  dc.seed = derive_seed(seed, {stream::design});
  const int max_rounds = dc.effective_max_rounds(cfg.model.n());

  std::vector<RoundSnapshot> rounds;
  SimulationExecutor executor(truth, cfg.model.errors, derive_seed(seed, {stream::executor}));
  auto observer = [&](const SessionState& state) {
    RoundSnapshot snap;
    snap.marginals = state.marginals;
    snap.tests = static_cast<int>(state.design.size());
    if (cfg.model.n() <= kMaxExactIndividuals) {
      snap.entropy = posterior_entropy(exact_posterior(cfg.model, state.design, state.data));
      snap.exact = true;
    } else {
      snap.entropy = posterior_entropy(*state.samples).nats;
    }
    rounds.push_back(std::move(snap));
  };
  run(dc, executor, cfg.model, observer);

  for (const auto& interval : cfg.interval_grid) {
    std::size_t r = 0;
    while (r + 1 < rounds.size() && !should_stop(rounds[r].marginals, interval)) ++r;
    Cell cell;
    const auto& snap = rounds[r];
    cell.tests = snap.tests;
    cell.truncated = !should_stop(snap.marginals, interval) && static_cast<int>(r + 1) >= max_rounds;
    score(cell, truth, classify(snap.marginals));
    cell.entropy = snap.entropy;
    cell.entropy_exact = snap.exact;
    cells.push_back(cell);
  }
}

ReplicateResult run_replicate(const ScenarioConfig& cfg, int rep) {
  ReplicateResult out;
  const auto r = static_cast<std::uint64_t>(rep);
  Rng truth_rng(derive_seed(cfg.seed, {stream::truth, r}));
  const InfectionState truth = sample_prior_state(cfg.model.population, cfg.model.prior, truth_rng);
  out.infected = truth.count();
  for (std::size_t si = 0; si < cfg.strategies.size(); ++si) {
    const auto& s = cfg.strategies[si];
    const std::uint64_t seed = derive_seed(cfg.seed, {stream::strategy, r, si});
    if (s.kind == StrategyKind::dope) {
      run_dope_cells(cfg, s, truth, seed, out.cells);
      continue;
    }
    Rng rng(seed);
    StrategyOutcome o;
    switch (s.kind) {
      case StrategyKind::dorfman: o = dorfman_run(truth, cfg.model.errors, s.dorfman, rng); break;
      case StrategyKind::recursive: o = recursive_run(truth, cfg.model.errors, s.recursive, rng); break;
      case StrategyKind::matrix: o = matrix_run(truth, cfg.model.errors, s.matrix, rng); break;
      case StrategyKind::separate: o = separate_run(truth, cfg.model.errors, rng); break;
      case StrategyKind::dope: break;
    }
    Cell cell;
    cell.tests = o.tests_used;
    score(cell, truth, o.classification);
    posterior_entropy_of(cell, cfg.model, o.pools, o.results);
    out.cells.push_back(cell);
  }
  return out;
}

double ratio(long num, long den) { return den > 0 ? static_cast<double>(num) / static_cast<double>(den) : 0.0; }

}  // namespace

const char* strategy_kind_name(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::dope: return "dope";
    case StrategyKind::dorfman: return "dorfman";
    case StrategyKind::recursive: return "recursive";
    case StrategyKind::matrix: return "matrix";
    case StrategyKind::separate: return "separate";
  }
  return "separate";
}

StrategyKind strategy_kind_from_name(const std::string& name) {
  for (auto k : {StrategyKind::dope, StrategyKind::dorfman, StrategyKind::recursive, StrategyKind::matrix,
                 StrategyKind::separate})
    if (name == strategy_kind_name(k)) return k;
  throw validation_error("strategies", "unknown strategy kind " + name);
}

void ScenarioConfig::validate() const {
  model.validate();
  if (n_populations < 1) throw validation_error("n_populations", "n_populations must be at least 1");
  if (mc_samples < 2) throw validation_error("mc_samples", "mc_samples must be at least 2");
  if (workers < 1) throw validation_error("workers", "workers must be at least 1");
  if (strategies.empty()) throw validation_error("strategies", "at least one strategy is required");
  for (const auto& s : strategies) {
    switch (s.kind) {
      case StrategyKind::dorfman: s.dorfman.validate(); break;
      case StrategyKind::recursive: s.recursive.validate(); break;
      case StrategyKind::matrix: s.matrix.validate(model.n()); break;
      case StrategyKind::separate: break;
      case StrategyKind::dope:
        if (interval_grid.empty()) throw validation_error("interval_grid", "the design procedure needs intervals");
        if (s.k_pools_per_step < 1) throw validation_error("k_pools_per_step", "k_pools_per_step must be at least 1");
        s.gibbs.validate();
        s.hill_climb.validate();
        break;
    }
  }
  for (const auto& i : interval_grid) i.validate();
}

std::vector<DecisionInterval> default_interval_grid() {
  std::vector<DecisionInterval> grid;
  for (int lo = 1; lo <= 15; ++lo)
    for (int hi = 30; hi <= 95; hi += 5) grid.push_back(DecisionInterval::closed(lo / 100.0, hi / 100.0));
  return grid;
}

Model desk_model() {
  Model m;
  m.population = PopulationSpec::from_sizes({2, 3, 5});
  m.prior = {0.2, 0.2, 0.01};
  m.errors = {0.2, 0.01};
  return m;
}

ScenarioConfig desk_scenario() {
  ScenarioConfig c;
  c.model = desk_model();
  c.n_populations = 100;
  c.mc_samples = 12000;
  c.interval_grid = default_interval_grid();
  StrategyConfig dope_cfg;
  dope_cfg.kind = StrategyKind::dope;
  StrategyConfig dorfman{.kind = StrategyKind::dorfman, .dorfman = {5}};
  StrategyConfig recursive{.kind = StrategyKind::recursive, .recursive = {5}};
  StrategyConfig matrix{.kind = StrategyKind::matrix, .matrix = {2, 5}};
  StrategyConfig separate{.kind = StrategyKind::separate};
  c.strategies = {dope_cfg, dorfman, recursive, matrix, separate};
  return c;
}

double MetricsRow::fnr_se() const { return infected > 0 ? std::sqrt(fnr * (1.0 - fnr) / infected) : 0.0; }
double MetricsRow::fpr_se() const { return healthy > 0 ? std::sqrt(fpr * (1.0 - fpr) / healthy) : 0.0; }

std::string MetricsRow::series() const {
  if (!interval) return strategy;
  if (interval->empty) return strategy + "[empty]";
  std::ostringstream os;
  os << strategy << '[' << interval->lower << ',' << interval->upper << ']';
  return os.str();
}

std::vector<MetricsRow> run_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  const int reps = cfg.n_populations;
  std::vector<ReplicateResult> results(reps);
  const int workers = std::min(cfg.workers, reps);
  if (workers <= 1) {
    for (int r = 0; r < reps; ++r) results[r] = run_replicate(cfg, r);
  } else {
    std::atomic<int> next{0};
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int r = next++; r < reps; r = next++) results[r] = run_replicate(cfg, r);
      });
  }

  // Row skeletons in cell order.
  std::vector<MetricsRow> rows;
  for (const auto& s : cfg.strategies) {
    if (s.kind == StrategyKind::dope) {
      for (const auto& i : cfg.interval_grid) {
        MetricsRow row;
        row.strategy = s.name();
        row.interval = i;
        rows.push_back(row);
      }
    } else {
      MetricsRow row;
      row.strategy = s.name();
      rows.push_back(row);
    }
  }

  long infected = 0;
  for (const auto& r : results) infected += r.infected;
  const long total = static_cast<long>(cfg.model.n()) * reps;
  const std::string digest = config_digest(cfg);
  for (std::size_t c = 0; c < rows.size(); ++c) {
    auto& row = rows[c];
    long tests = 0;
    double entropy = 0.0;
    bool exact = true;
    for (const auto& r : results) {
      const Cell& cell = r.cells[c];
      tests += cell.tests;
      row.false_negatives += cell.false_negatives;
      row.false_positives += cell.false_positives;
      row.truncated_runs += cell.truncated;
      entropy += cell.entropy;
      exact = exact && cell.entropy_exact;
    }
    row.n_populations = reps;
    row.infected = infected;
    row.healthy = total - infected;
    row.mean_tests = static_cast<double>(tests) / reps;
    row.fnr = ratio(row.false_negatives, row.infected);
    row.fpr = ratio(row.false_positives, row.healthy);
    row.mean_posterior_entropy = entropy / reps;
    row.entropy_exact = exact;
    row.prevalence = static_cast<double>(infected) / static_cast<double>(total);
    row.p_primary = cfg.model.prior.p_primary;
    row.p_secondary = cfg.model.prior.p_secondary;
    row.seed = cfg.seed;
    row.config_digest = digest;
  }
  return rows;
}

std::vector<MetricsRow> prevalence_sweep(const ScenarioConfig& base,
                                         const std::vector<std::pair<double, double>>& connectivity_grid) {
  if (connectivity_grid.empty()) throw validation_error("connectivity_grid", "connectivity grid must be nonempty");
  std::vector<MetricsRow> out;
  for (std::size_t g = 0; g < connectivity_grid.size(); ++g) {
    ScenarioConfig cfg = base;
    cfg.model.prior.p_primary = connectivity_grid[g].first;
    cfg.model.prior.p_secondary = connectivity_grid[g].second;
    cfg.seed = derive_seed(base.seed, {g});
    auto rows = run_scenario(cfg);
    out.insert(out.end(), rows.begin(), rows.end());
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const MetricsRow& a, const MetricsRow& b) { return a.prevalence < b.prevalence; });
  return out;
}

bool dominates_fnr(const MetricsRow& a, const MetricsRow& b) {
  return a.fnr < b.fnr && a.mean_tests <= b.mean_tests;
}

bool dominates_entropy(const MetricsRow& a, const MetricsRow& b) {
  return a.mean_posterior_entropy < b.mean_posterior_entropy && a.mean_tests <= b.mean_tests;
}

std::vector<DominanceFinding> dominance_report(const std::vector<MetricsRow>& rows, bool cross_strategy_only) {
  std::vector<DominanceFinding> out;
  for (const auto& a : rows)
    for (const auto& b : rows) {
      if (&a == &b) continue;
      if (cross_strategy_only && a.strategy == b.strategy) continue;
      if (dominates_fnr(a, b)) out.push_back({a.series(), b.series(), "fnr"});
      if (dominates_entropy(a, b)) out.push_back({a.series(), b.series(), "entropy"});
    }
  return out;
}

std::optional<DecisionInterval> select_interval(const std::vector<MetricsRow>& rows, double target_fnr) {
  const MetricsRow* best = nullptr;
  auto better = [](const MetricsRow& a, const MetricsRow& b) {
    if (a.mean_tests != b.mean_tests) return a.mean_tests < b.mean_tests;
    if (a.fnr != b.fnr) return a.fnr < b.fnr;
    if (a.interval->lower != b.interval->lower) return a.interval->lower < b.interval->lower;
    return a.interval->upper < b.interval->upper;
  };
  for (const auto& row : rows) {
    if (!row.interval || row.interval->empty || !(row.fnr < target_fnr)) continue;
    if (!best || better(row, *best)) best = &row;
  }
  if (!best) return std::nullopt;
  return *best->interval;
}

std::string config_digest(const ScenarioConfig& config) {
  const std::size_t h = std::hash<std::string>{}(scenario_to_json(config).dump());
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

// Scenario files

namespace {

ordered_json strategy_to_json(const StrategyConfig& s) {
  ordered_json j;
  j["kind"] = strategy_kind_name(s.kind);
  if (!s.label.empty()) j["label"] = s.label;
  switch (s.kind) {
    case StrategyKind::dorfman: j["pool_size"] = s.dorfman.pool_size; break;
    case StrategyKind::recursive: j["initial_pool_size"] = s.recursive.initial_pool_size; break;
    case StrategyKind::matrix:
      j["rows"] = s.matrix.rows;
      j["cols"] = s.matrix.cols;
      break;
    case StrategyKind::separate: break;
    case StrategyKind::dope:
      j["k_pools_per_step"] = s.k_pools_per_step;
      j["burn_in"] = s.gibbs.burn_in;
      j["max_thinning"] = s.gibbs.max_thinning;
      j["n_restarts"] = s.hill_climb.n_restarts;
      j["n_perturbations"] = s.hill_climb.n_perturbations;
      j["max_steps"] = s.hill_climb.max_steps;
      j["max_rounds"] = s.max_rounds;
      break;
  }
  return j;
}

StrategyConfig strategy_from_json(const ordered_json& j) {
  StrategyConfig s;
  s.kind = strategy_kind_from_name(required_field<std::string>(j, "kind"));
  s.label = optional_field<std::string>(j, "label", "");
  s.dorfman.pool_size = optional_field<int>(j, "pool_size", s.dorfman.pool_size);
  s.recursive.initial_pool_size = optional_field<int>(j, "initial_pool_size", s.recursive.initial_pool_size);
  s.matrix.rows = optional_field<int>(j, "rows", s.matrix.rows);
  s.matrix.cols = optional_field<int>(j, "cols", s.matrix.cols);
  s.k_pools_per_step = optional_field<int>(j, "k_pools_per_step", s.k_pools_per_step);
  s.gibbs.burn_in = optional_field<int>(j, "burn_in", s.gibbs.burn_in);
  s.gibbs.max_thinning = optional_field<int>(j, "max_thinning", s.gibbs.max_thinning);
  s.hill_climb.n_restarts = optional_field<int>(j, "n_restarts", s.hill_climb.n_restarts);
  s.hill_climb.n_perturbations = optional_field<int>(j, "n_perturbations", s.hill_climb.n_perturbations);
  s.hill_climb.max_steps = optional_field<int>(j, "max_steps", s.hill_climb.max_steps);
  s.max_rounds = optional_field<int>(j, "max_rounds", s.max_rounds);
  return s;
}

}  // namespace

ordered_json scenario_to_json(const ScenarioConfig& c) {
  ordered_json j = model_to_json(c.model);
  j["n_populations"] = c.n_populations;
  j["mc_samples"] = c.mc_samples;
  j["seed"] = c.seed;
  ordered_json strategies = ordered_json::array();
  for (const auto& s : c.strategies) strategies.push_back(strategy_to_json(s));
  j["strategies"] = std::move(strategies);
  ordered_json grid = ordered_json::array();
  for (const auto& i : c.interval_grid) {
    if (i.empty)
      grid.push_back(nullptr);
    else
      grid.push_back({i.lower, i.upper});
  }
  j["interval_grid"] = std::move(grid);
  return j;
}

ScenarioConfig scenario_from_json(const ordered_json& j) {
  ScenarioConfig c;
  c.model = model_from_json(j);
  c.n_populations = optional_field<int>(j, "n_populations", c.n_populations);
  c.mc_samples = optional_field<int>(j, "mc_samples", c.mc_samples);
  c.seed = optional_field<std::uint64_t>(j, "seed", c.seed);
  c.workers = optional_field<int>(j, "workers", c.workers);
  if (j.contains("strategies")) {
    for (const auto& s : j.at("strategies")) c.strategies.push_back(strategy_from_json(s));
  } else {
    c.strategies = desk_scenario().strategies;
  }
  if (!j.contains("interval_grid") || j.at("interval_grid") == "default") {
    c.interval_grid = default_interval_grid();
  } else {
    const auto& g = j.at("interval_grid");
    if (g.is_object()) {
      // Cartesian product of lower and upper bounds.
      for (double lo : g.at("lower").get<std::vector<double>>())
        for (double hi : g.at("upper").get<std::vector<double>>())
          c.interval_grid.push_back(DecisionInterval::closed(lo, hi));
    } else if (g.is_array()) {
      for (const auto& i : g) {
        if (i.is_null()) {
          c.interval_grid.push_back(DecisionInterval::none());
        } else {
          if (!i.is_array() || i.size() != 2) throw validation_error("interval_grid", "intervals are [lower, upper]");
          c.interval_grid.push_back(DecisionInterval::closed(i[0].get<double>(), i[1].get<double>()));
        }
      }
    } else {
      throw validation_error("interval_grid", "interval_grid must be a list or a {lower, upper} object");
    }
  }
  c.validate();
  return c;
}

std::vector<std::pair<double, double>> connectivity_grid_from_json(const ordered_json& j) {
  if (!j.contains("connectivity_grid")) throw validation_error("connectivity_grid", "missing field connectivity_grid");
  std::vector<std::pair<double, double>> grid;
  const auto& g = j.at("connectivity_grid");
  if (g.is_object()) {
    for (double pp : g.at("p_primary").get<std::vector<double>>())
      for (double ps : g.at("p_secondary").get<std::vector<double>>()) grid.emplace_back(pp, ps);
  } else {
    for (const auto& p : g) grid.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  }
  for (const auto& [pp, ps] : grid) {
    if (!(pp >= 0 && pp <= 1)) throw validation_error("connectivity_grid", "p_primary must lie in [0, 1]");
    if (!(ps >= 0 && ps <= 1)) throw validation_error("connectivity_grid", "p_secondary must lie in [0, 1]");
  }
  return grid;
}

}  // namespace dope
