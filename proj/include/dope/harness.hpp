#pragma once

// Simulation campaigns comparing the sequential design procedure with the
// reference pooling strategies, plus the analyses run over their metrics.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dope/baselines.hpp"
#include "dope/json_io.hpp"
#include "dope/model.hpp"
#include "dope/procedure.hpp"

namespace dope {

enum class StrategyKind { dope, dorfman, recursive, matrix, separate };

const char* strategy_kind_name(StrategyKind kind);
StrategyKind strategy_kind_from_name(const std::string& name);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::separate;
  std::string label;  // defaults to the kind name
  DorfmanConfig dorfman;
  RecursiveConfig recursive;
  MatrixConfig matrix;
  // Sequential design settings; seeds and the interval are set per replicate.
  int k_pools_per_step = 1;
  GibbsConfig gibbs;
  HillClimbConfig hill_climb;
  int max_rounds = 0;

  std::string name() const { return label.empty() ? strategy_kind_name(kind) : label; }
};

struct ScenarioConfig {
  Model model;
  int n_populations = 100;
  std::vector<StrategyConfig> strategies;
  std::vector<DecisionInterval> interval_grid;
  int mc_samples = 12000;
  std::uint64_t seed = 0;
  int workers = 1;

  void validate() const;
};

/// Lower bounds {0.01..0.15} x upper bounds {0.30, 0.35, ..., 0.95}.
std::vector<DecisionInterval> default_interval_grid();
/// N = 10 in clusters of 2, 3 and 5 with Pp = Ps = 0.2, Pb = 0.01, Pfn = 0.2, Pfp = 0.01.
Model desk_model();
/// Dorfman 5, recursive 5, matrix 2x5, separate and the design procedure for N = 10.
ScenarioConfig desk_scenario();

struct MetricsRow {
  std::string strategy;
  std::optional<DecisionInterval> interval;
  double mean_tests = 0.0;
  double fnr = 0.0;
  double fpr = 0.0;
  double mean_posterior_entropy = 0.0;  // NaN when unavailable
  bool entropy_exact = false;
  double prevalence = 0.0;  // realized infected fraction over the campaign
  int n_populations = 0;
  long infected = 0;
  long healthy = 0;
  long false_negatives = 0;
  long false_positives = 0;
  long truncated_runs = 0;
  double p_primary = 0.0;
  double p_secondary = 0.0;
  std::uint64_t seed = 0;
  std::string config_digest;

  double fnr_se() const;
  double fpr_se() const;
  /// "dorfman", "dope[0.05,0.9]", "dope[empty]".
  std::string series() const;
};

bool same_row(const MetricsRow& a, const MetricsRow& b);

std::vector<MetricsRow> run_scenario(const ScenarioConfig& config);

std::vector<MetricsRow> prevalence_sweep(const ScenarioConfig& base,
                                         const std::vector<std::pair<double, double>>& connectivity_grid);

struct DominanceFinding {
  std::string dominant;
  std::string dominated;
  std::string metric;  // "fnr" or "entropy"
};

/// A dominates B on a metric iff A's value is strictly lower and A uses no more tests.
bool dominates_fnr(const MetricsRow& a, const MetricsRow& b);
bool dominates_entropy(const MetricsRow& a, const MetricsRow& b);
std::vector<DominanceFinding> dominance_report(const std::vector<MetricsRow>& rows, bool cross_strategy_only = true);

/// Interval with the fewest mean tests among those with fnr below the target;
/// ties go to smaller fnr, then smaller (lower, upper). nullopt when infeasible.
std::optional<DecisionInterval> select_interval(const std::vector<MetricsRow>& rows, double target_fnr);

/// Writes metrics.csv plus tests_vs_fnr.csv, tests_vs_entropy.csv and prevalence.csv.
void emit_tables(const std::vector<MetricsRow>& rows, const std::filesystem::path& destination);
std::string format_metrics_csv(const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> parse_metrics_csv(const std::string& text);
std::vector<MetricsRow> read_metrics_table(const std::filesystem::path& path);

// Scenario files: the model configuration extended with campaign fields,
// "strategies", "interval_grid" and (for sweeps) "connectivity_grid".
ordered_json scenario_to_json(const ScenarioConfig& config);
ScenarioConfig scenario_from_json(const ordered_json& j);
std::vector<std::pair<double, double>> connectivity_grid_from_json(const ordered_json& j);
std::string config_digest(const ScenarioConfig& config);

}  // namespace dope
