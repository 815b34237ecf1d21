#include <algorithm>
#include <cmath>
#include <sstream>

#include "dope/json_io.hpp"
#include "dope/posterior.hpp"

namespace dope {

namespace {
constexpr double kReliableLengthFactor = 50.0;
}

double integrated_autocorrelation_time(std::span<const double> series, bool& reliable, double window_factor) {
  reliable = true;
  const std::size_t n = series.size();
  if (n < 2) {
    reliable = false;
    return 1.0;
  }
  double mean = 0.0;
  for (double x : series) mean += x;
  mean /= static_cast<double>(n);
  std::vector<double> centered(n);
  double c0 = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    centered[t] = series[t] - mean;
    c0 += centered[t] * centered[t];
  }
  if (c0 <= 0.0) return 1.0;  // constant coordinate

  double tau = 1.0;
  std::size_t window = 0;
  for (std::size_t lag = 1; lag < n; ++lag) {
    double c = 0.0;
    for (std::size_t t = 0; t + lag < n; ++t) c += centered[t] * centered[t + lag];
    tau += 2.0 * c / c0;
    if (static_cast<double>(lag) >= window_factor * tau) {
      window = lag;
      break;
    }
  }
  if (window == 0 || static_cast<double>(n) < kReliableLengthFactor * tau) reliable = false;
  return tau;
}

ChainDiagnostics estimate_iact(const std::vector<std::vector<std::uint8_t>>& series, int max_thinning) {
  ChainDiagnostics d;
  d.iact_per_coordinate.reserve(series.size());
  double worst = 1.0;
  std::vector<double> buffer;
  for (const auto& s : series) {
    buffer.assign(s.begin(), s.end());
    bool reliable = true;
    const double tau = std::max(1.0, integrated_autocorrelation_time(buffer, reliable));
    if (!reliable) d.unreliable = true;
    d.iact_per_coordinate.push_back(tau);
    worst = std::max(worst, tau);
  }
  if (d.unreliable) {
    d.thinning = max_thinning;
  } else {
    const double t = std::ceil(worst);
    d.capped = t > max_thinning;
    d.thinning = d.capped ? max_thinning : std::max(1, static_cast<int>(t));
  }
  return d;
}

std::string diagnostics_report(const ChainDiagnostics& d) {
  ordered_json j;
  j["iact_per_coordinate"] = d.iact_per_coordinate;
  j["thinning"] = d.thinning;
  j["burn_in"] = d.burn_in;
  ordered_json warnings = ordered_json::array();
  if (d.unreliable) warnings.push_back("iact_unreliable");
  if (d.capped) warnings.push_back("thinning_capped");
  j["warnings"] = std::move(warnings);
  j["from_prior"] = d.from_prior;
  return j.dump(2);
}

}  // namespace dope
