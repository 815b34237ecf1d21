#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dope/harness.hpp"

namespace dope {

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::nan("");
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) throw std::runtime_error("bad number in table: " + s);
  return v;
}

template <typename Int>
Int parse_int(const std::string& s) {
  Int v{};
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) throw std::runtime_error("bad integer in table: " + s);
  return v;
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

class Writer {
 public:
  explicit Writer(std::vector<std::string> header) : width_(header.size()) { row(header); }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != width_) throw std::logic_error("table row width mismatch");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) os_ << ',';
      os_ << quote(cells[i]);
    }
    os_ << '\n';
  }
  std::string str() const { return os_.str(); }

 private:
  std::size_t width_;
  std::ostringstream os_;
};

std::string lower_of(const MetricsRow& r) { return r.interval && !r.interval->empty ? fmt(r.interval->lower) : ""; }
std::string upper_of(const MetricsRow& r) { return r.interval && !r.interval->empty ? fmt(r.interval->upper) : ""; }
std::string empty_of(const MetricsRow& r) { return r.interval ? (r.interval->empty ? "1" : "0") : ""; }

const std::vector<std::string> kMetricsHeader = {
    "series",         "strategy",      "interval_lower",  "interval_upper",         "interval_empty",
    "mean_tests",     "fnr",           "fnr_se",          "fpr",                    "fpr_se",
    "mean_posterior_entropy", "entropy_exact", "prevalence", "n_populations",       "infected",
    "healthy",        "false_negatives", "false_positives", "truncated_runs",       "p_primary",
    "p_secondary",    "seed",          "config_digest"};

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

bool same_double(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

}  // namespace

bool same_row(const MetricsRow& a, const MetricsRow& b) {
  return a.strategy == b.strategy && a.interval == b.interval && same_double(a.mean_tests, b.mean_tests) &&
         same_double(a.fnr, b.fnr) && same_double(a.fpr, b.fpr) &&
         same_double(a.mean_posterior_entropy, b.mean_posterior_entropy) && a.entropy_exact == b.entropy_exact &&
         same_double(a.prevalence, b.prevalence) && a.n_populations == b.n_populations && a.infected == b.infected &&
         a.healthy == b.healthy && a.false_negatives == b.false_negatives && a.false_positives == b.false_positives &&
         a.truncated_runs == b.truncated_runs && same_double(a.p_primary, b.p_primary) &&
         same_double(a.p_secondary, b.p_secondary) && a.seed == b.seed && a.config_digest == b.config_digest;
}

std::string format_metrics_csv(const std::vector<MetricsRow>& rows) {
  Writer w(kMetricsHeader);
  for (const auto& r : rows) {
    w.row({r.series(), r.strategy, lower_of(r), upper_of(r), empty_of(r), fmt(r.mean_tests), fmt(r.fnr),
           fmt(r.fnr_se()), fmt(r.fpr), fmt(r.fpr_se()), fmt(r.mean_posterior_entropy), r.entropy_exact ? "1" : "0",
           fmt(r.prevalence), std::to_string(r.n_populations), std::to_string(r.infected), std::to_string(r.healthy),
           std::to_string(r.false_negatives), std::to_string(r.false_positives), std::to_string(r.truncated_runs),
           fmt(r.p_primary), fmt(r.p_secondary), std::to_string(r.seed), r.config_digest});
  }
  return w.str();
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("metrics table is empty");
  if (split_line(line) != kMetricsHeader) throw std::runtime_error("unexpected metrics table header");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_line(line);
    if (c.size() != kMetricsHeader.size()) throw std::runtime_error("metrics row has the wrong width");
    MetricsRow r;
    r.strategy = c[1];
    if (c[4] == "1") {
      r.interval = DecisionInterval::none();
    } else if (c[4] == "0") {
      r.interval = DecisionInterval::closed(parse_double(c[2]), parse_double(c[3]));
    }
    r.mean_tests = parse_double(c[5]);
    r.fnr = parse_double(c[6]);
    r.fpr = parse_double(c[8]);
    r.mean_posterior_entropy = parse_double(c[10]);
    r.entropy_exact = c[11] == "1";
    r.prevalence = parse_double(c[12]);
    r.n_populations = parse_int<int>(c[13]);
    r.infected = parse_int<long>(c[14]);
    r.healthy = parse_int<long>(c[15]);
    r.false_negatives = parse_int<long>(c[16]);
    r.false_positives = parse_int<long>(c[17]);
    r.truncated_runs = parse_int<long>(c[18]);
    r.p_primary = parse_double(c[19]);
    r.p_secondary = parse_double(c[20]);
    r.seed = parse_int<std::uint64_t>(c[21]);
    r.config_digest = c[22];
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<MetricsRow> read_metrics_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_metrics_csv(ss.str());
}

void emit_tables(const std::vector<MetricsRow>& rows, const std::filesystem::path& destination) {
  std::filesystem::create_directories(destination);
  write_file(destination / "metrics.csv", format_metrics_csv(rows));

  Writer fnr({"series", "strategy", "interval_lower", "interval_upper", "mean_tests", "fnr", "fnr_se", "seed",
              "config_digest"});
  Writer entropy({"series", "strategy", "interval_lower", "interval_upper", "mean_tests", "mean_posterior_entropy",
                  "entropy_exact", "seed", "config_digest"});
  Writer prevalence({"series", "strategy", "p_primary", "p_secondary", "prevalence", "mean_tests", "fnr", "fpr",
                     "mean_posterior_entropy", "seed", "config_digest"});
  for (const auto& r : rows) {
    const std::string seed = std::to_string(r.seed);
    fnr.row({r.series(), r.strategy, lower_of(r), upper_of(r), fmt(r.mean_tests), fmt(r.fnr), fmt(r.fnr_se()), seed,
             r.config_digest});
    entropy.row({r.series(), r.strategy, lower_of(r), upper_of(r), fmt(r.mean_tests), fmt(r.mean_posterior_entropy),
                 r.entropy_exact ? "1" : "0", seed, r.config_digest});
    prevalence.row({r.series(), r.strategy, fmt(r.p_primary), fmt(r.p_secondary), fmt(r.prevalence),
                    fmt(r.mean_tests), fmt(r.fnr), fmt(r.fpr), fmt(r.mean_posterior_entropy), seed, r.config_digest});
  }
  write_file(destination / "tests_vs_fnr.csv", fnr.str());
  write_file(destination / "tests_vs_entropy.csv", entropy.str());
  write_file(destination / "prevalence.csv", prevalence.str());
}

}  // namespace dope
