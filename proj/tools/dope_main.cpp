// Command-line front end: simulation campaigns, table analyses and the session server.

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "dope/errors.hpp"
#include "dope/harness.hpp"
#include "dope/http_api.hpp"
#include "dope/service.hpp"

namespace {

struct CampaignFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<int> samples;
  std::optional<int> populations;
};

void add_campaign_flags(CLI::App* cmd, CampaignFlags& f, bool config_required) {
  auto* c = cmd->add_option("--config", f.config, "scenario file (JSON)");
  if (config_required) c->required()->check(CLI::ExistingFile);
  else c->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out, "directory for the output tables")->required();
  cmd->add_option("--seed", f.seed, "base RNG seed");
  cmd->add_option("--workers", f.workers, "parallel replicate workers");
  cmd->add_option("--samples", f.samples, "Monte Carlo sample count L");
  cmd->add_option("--populations", f.populations, "simulated populations per scenario");
}

dope::ordered_json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  try {
    return dope::ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw dope::validation_error("config", std::string("malformed JSON: ") + e.what());
  }
}

dope::ScenarioConfig load_scenario(const CampaignFlags& f) {
  dope::ScenarioConfig cfg = f.config.empty() ? dope::desk_scenario() : dope::scenario_from_json(read_json(f.config));
  if (f.seed) cfg.seed = *f.seed;
  if (f.workers) cfg.workers = *f.workers;
  if (f.samples) cfg.mc_samples = *f.samples;
  if (f.populations) cfg.n_populations = *f.populations;
  cfg.validate();
  return cfg;
}

void print_summary(const std::vector<dope::MetricsRow>& rows, const std::string& out) {
  std::size_t baselines = 0;
  for (const auto& r : rows) baselines += !r.interval;
  const auto findings = dope::dominance_report(rows);
  std::cout << "wrote " << rows.size() << " rows (" << baselines << " baseline) to " << out << "\n"
            << findings.size() << " cross-strategy dominance findings\n";
}

std::vector<dope::MetricsRow> read_tables(const std::string& path) {
  std::filesystem::path p = path;
  if (std::filesystem::is_directory(p)) p /= "metrics.csv";
  return dope::read_metrics_table(p);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential D-optimal pooled testing: simulation campaigns and session server"};
  app.require_subcommand(1);

  CampaignFlags sim_flags;
  auto* simulate = app.add_subcommand("simulate", "run one scenario and write metrics tables");
  add_campaign_flags(simulate, sim_flags, false);

  CampaignFlags sweep_flags;
  auto* sweep = app.add_subcommand("sweep", "run a scenario over a (p_primary, p_secondary) grid");
  add_campaign_flags(sweep, sweep_flags, true);

  std::string tables;
  double target = 0.0;
  auto* select = app.add_subcommand("select-interval", "cheapest decision interval meeting a target FNR");
  select->add_option("--tables", tables, "metrics.csv or a directory containing it")->required();
  select->add_option("--target", target, "target false-negative rate")->required()->check(CLI::Range(0.0, 1.0));

  std::string report_tables;
  bool same_strategy = false;
  auto* report = app.add_subcommand("report", "list dominance findings in a metrics table");
  report->add_option("--tables", report_tables, "metrics.csv or a directory containing it")->required();
  report->add_flag("--all-pairs", same_strategy, "also compare intervals of the same strategy");

  std::string defaults_out;
  auto* defaults = app.add_subcommand("defaults", "print the built-in desk scenario");
  defaults->add_option("--out", defaults_out, "write to this file instead of stdout");

  std::string replay_log;
  auto* replay = app.add_subcommand("replay", "recompute a session log and check it bit for bit");
  replay->add_option("--log", replay_log, "session .jsonl file")->required()->check(CLI::ExistingFile);

  dope::ServerOptions server = dope::server_options_from_env();
  std::string bind_addr;
  std::optional<int> serve_workers;
  std::string data_dir;
  auto* serve = app.add_subcommand("serve", "run the /v1 session API");
  serve->add_option("--data-dir", data_dir, "session log directory (DOPE_DATA_DIR)");
  serve->add_option("--bind", bind_addr, "host:port (DOPE_BIND_ADDR)");
  serve->add_option("--workers", serve_workers, "design-search threads (DOPE_WORKERS)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) {
      const auto cfg = load_scenario(sim_flags);
      const auto rows = dope::run_scenario(cfg);
      dope::emit_tables(rows, sim_flags.out);
      print_summary(rows, sim_flags.out);
    } else if (*sweep) {
      const auto cfg = load_scenario(sweep_flags);
      const auto grid = dope::connectivity_grid_from_json(read_json(sweep_flags.config));
      const auto rows = dope::prevalence_sweep(cfg, grid);
      dope::emit_tables(rows, sweep_flags.out);
      print_summary(rows, sweep_flags.out);
    } else if (*select) {
      const auto choice = dope::select_interval(read_tables(tables), target);
      if (!choice) {
        std::cout << "no interval reaches fnr < " << target << "\n";
        return 2;
      }
      std::cout << dope::ordered_json{{"lower", choice->lower}, {"upper", choice->upper}}.dump() << "\n";
    } else if (*report) {
      for (const auto& f : dope::dominance_report(read_tables(report_tables), !same_strategy))
        std::cout << f.dominant << " dominates " << f.dominated << " on " << f.metric << "\n";
    } else if (*defaults) {
      const std::string text = dope::scenario_to_json(dope::desk_scenario()).dump(2) + "\n";
      if (defaults_out.empty()) {
        std::cout << text;
      } else {
        std::ofstream(defaults_out) << text;
      }
    } else if (*replay) {
      const auto rep = dope::replay_verify(std::filesystem::path(replay_log));
      if (!rep.ok) {
        std::cout << "mismatch: " << rep.message << "\n";
        return 1;
      }
      std::cout << "ok: " << rep.records << " records reproduced\n";
    } else if (*serve) {
      if (!data_dir.empty()) server.data_dir = data_dir;
      if (!bind_addr.empty()) {
        const auto colon = bind_addr.rfind(':');
        server.host = bind_addr.substr(0, colon);
        if (colon != std::string::npos) server.port = std::stoi(bind_addr.substr(colon + 1));
      }
      if (serve_workers) server.workers = *serve_workers;
      return dope::run_server(server);
    }
  } catch (const dope::validation_error& e) {
    std::cerr << "invalid " << e.field() << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
