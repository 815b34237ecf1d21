#include <chrono>
#include <cmath>
#include <map>

#include "doctest.h"
#include "dope/design.hpp"
#include "dope/errors.hpp"
#include "dope/json_io.hpp"
#include "support.hpp"

using namespace dope;

namespace {

Model oracle_instance() {
  Model m;
  m.population = PopulationSpec::from_sizes({3});
  m.prior = {0.2, 0.2, 0.01};
  m.errors = {0.2, 0.01};
  return m;
}

std::vector<double> prior_table(const Model& m) { return oracle::posterior_table(m, {}, {}); }

bool legal(const Design& d, int n, int k) {
  if (static_cast<int>(d.size()) != k) return false;
  for (const auto& p : d) {
    if (p.empty() || p.size() > std::min(n, kMaxPoolSize)) return false;
    if (n < 64 && (p.mask() >> n) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("pool count matrix holds infected counts per sample and pool") {
  const std::vector<InfectionState> samples{InfectionState(4, 0b1011), InfectionState(4, 0b0000)};
  const Design d{Pool{0, 1}, Pool{2, 3}, Pool{3}};
  const PoolCountMatrix pc(samples, d);
  CHECK(pc.rows() == 2);
  CHECK(pc.cols() == 3);
  CHECK(pc(0, 0) == 2);
  CHECK(pc(0, 1) == 1);
  CHECK(pc(0, 2) == 1);
  CHECK(pc(1, 1) == 0);
}

TEST_CASE("empty design carries no information") {
  const Model m = oracle_instance();
  const auto ps = prior_samples(m, 1000, 1);
  const MiEstimator est(ps.states, m.errors, 9);
  CHECK(est.evaluate({}).value == 0.0);
  CHECK(est.evaluate({}, MiMethod::pairwise).value == 0.0);
  CHECK(exact_mi({}, exact_posterior(m, {}, {}), m.errors) == 0.0);
}

TEST_CASE("uninformative tests give zero estimated information") {
  Model m = oracle_instance();
  m.errors = {1.0, 0.3};
  const int L = 2000;
  const auto ps = prior_samples(m, L, 2);
  const MiEstimator est(ps.states, m.errors, 10);
  CHECK(std::abs(est.evaluate({Pool{0, 1, 2}}).value) <= 5.0 / L);
  CHECK(exact_mi({Pool{0, 1, 2}}, exact_posterior(m, {}, {}), m.errors) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("grouped and pairwise evaluation agree at the same outcome draws") {
  gen::Gen g(31);
  for (int trial = 0; trial < 15; ++trial) {
    const int n = g.integer(2, 12);
    const Model m = g.model(n);
    const auto ps = prior_samples(m, 400, 100 + trial);
    const MiEstimator est(ps.states, m.errors, 200 + trial);
    const Design d = g.design(n, g.integer(1, 4));
    const double a = est.evaluate(d, MiMethod::grouped).value;
    const double b = est.evaluate(d, MiMethod::pairwise).value;
    CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)));
    CHECK(est.evaluate(d).value == a);  // bit-exact repeat
    CHECK(a >= -5.0 / 400);
  }
}

TEST_CASE("exact mutual information agrees with direct summation") {
  gen::Gen g(32);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = g.integer(1, 6);
    const Model m = g.model(n);
    const Design prior_d = g.design(n, g.integer(0, 2));
    const TestData prior_data = g.data(prior_d.size());
    const auto ex = exact_posterior(m, prior_d, prior_data);
    const Design d = g.design(n, g.integer(1, 4));
    const double value = exact_mi(d, ex, m.errors);
    CHECK(value == doctest::Approx(oracle::mutual_information(ex.probabilities, n, d, m.errors)).epsilon(1e-10));
    CHECK(value >= 0.0);
    // Repeating a pool never loses information.
    Design dup = d;
    dup.push_back(d[g.integer(0, static_cast<int>(d.size()) - 1)]);
    CHECK(exact_mi(dup, ex, m.errors) >= value - 1e-12);
  }
}

TEST_CASE("noiseless single test of one individual carries its binary entropy") {
  Model m;
  m.population = PopulationSpec::from_sizes({1, 1});
  m.prior = {0.3, 0.5, 0.5};
  m.errors = {0.0, 0.0};
  CHECK(exact_mi({Pool{0}}, exact_posterior(m, {}, {}), m.errors) ==
        doctest::Approx(oracle::binary_entropy(0.3)).epsilon(1e-12));
}

TEST_CASE("exact mutual information refuses oversized enumerations") {
  Model m;
  m.population = PopulationSpec::from_sizes({17});
  m.prior = {0.1, 0.1, 0.1};
  m.errors = {0.2, 0.01};
  CHECK_THROWS_AS(exact_mi({Pool{0}}, exact_posterior(m, {}, {}), m.errors), budget_exceeded);
  const Model small = oracle_instance();
  CHECK_THROWS_AS(exact_mi(Design(13, Pool{0}), exact_posterior(small, {}, {}), small.errors), budget_exceeded);
}

TEST_CASE("nested estimate is close to the exact value on the three-person cluster") {
  const Model m = oracle_instance();
  const double exact = exact_mi({Pool{0, 1, 2}}, exact_posterior(m, {}, {}), m.errors);
  CHECK(exact == doctest::Approx(oracle::mutual_information(prior_table(m), 3, {Pool{0, 1, 2}}, m.errors)));
  const auto ps = prior_samples(m, 20000, 5);
  Rng rng(6);
  const auto est = estimate_mi({Pool{0, 1, 2}}, ps, m.errors, rng);
  CHECK(est.n_samples == 20000);
  CHECK(std::abs(est.value - exact) <= 0.01);
}

TEST_CASE("perturbations are legal and reach every move class") {
  gen::Gen g(33);
  const PopulationSpec spec = PopulationSpec::from_sizes({2, 3, 5});
  Design d{Pool{0, 1, 2}, Pool{4}, Pool{5, 6, 7, 8}};
  std::map<MoveKind, int> seen;
  for (int k = 0; k < 10000; ++k) {
    const auto p = perturb_with_move(d, spec, g.rng());
    CHECK(legal(p.design, 10, 3));
    ++seen[p.move];
  }
  CHECK(seen[MoveKind::add] > 0);
  CHECK(seen[MoveKind::remove] > 0);
  CHECK(seen[MoveKind::swap] > 0);

  const Design single{Pool{3}};
  for (int k = 0; k < 2000; ++k) {
    const Design out = perturb(single, spec, g.rng());
    CHECK((out[0].size() == 1 || out[0].size() == 2));
  }

  for (int k = 0; k < 500; ++k) {
    const int n = g.integer(1, 64);
    const int kp = g.integer(1, 4);
    const Design r = random_design(kp, n, g.rng());
    CHECK(legal(r, n, kp));
    const Design q = perturb(r, gen::Gen(k).population(n), g.rng());
    CHECK(legal(q, n, kp));
  }
}

TEST_CASE("hill climbing resolves two fair coins with two noiseless tests") {
  Model m;
  m.population = PopulationSpec::from_sizes({1, 1});
  m.prior = {0.5, 0.5, 0.5};
  m.errors = {0.0, 0.0};
  const auto ps = prior_samples(m, 2000, 8);
  HillClimbConfig hc;
  hc.seed = 4;
  const auto res = optimal_design(2, ps, m.errors, m.population, hc);
  const auto prior = exact_posterior(m, {}, {});
  // Enumerate all two-pool designs over {1,2,3} masks.
  double best = 0.0;
  for (std::uint64_t a = 1; a < 4; ++a)
    for (std::uint64_t b = 1; b < 4; ++b) best = std::max(best, exact_mi({Pool(a), Pool(b)}, prior, m.errors));
  CHECK(best == doctest::Approx(2 * std::log(2.0)));
  CHECK(exact_mi(res.design, prior, m.errors) == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("single-pool search targets the only uncertain individual") {
  PosteriorSamples ps;
  for (int k = 0; k < 1000; ++k) ps.states.emplace_back(6, 0b100001 | (k % 2 ? 0b000100 : 0));
  const PopulationSpec spec = PopulationSpec::from_sizes({1, 1, 1, 1, 1, 1});
  const TestErrorParams err{0.2, 0.01};
  // Enumeration over all single pools.
  const MiEstimator est(ps.states, err, 3);
  std::uint64_t best_mask = 0;
  double best = -1.0;
  for (std::uint64_t mask = 1; mask < 64; ++mask) {
    const double v = est.evaluate({Pool(mask)}).value;
    if (v > best) best = v, best_mask = mask;
  }
  CHECK(Pool(best_mask).contains(2));
  HillClimbConfig hc;
  hc.seed = 12;
  const auto res = optimal_design(1, ps, err, spec, hc);
  CHECK(res.design[0].contains(2));
}

TEST_CASE("hill climbing is deterministic, worker-independent and never worse than its start") {
  const Model m = oracle_instance();
  Model m10;
  m10.population = PopulationSpec::from_sizes({2, 3, 5});
  m10.prior = {0.2, 0.2, 0.01};
  m10.errors = {0.2, 0.01};
  const auto ps = prior_samples(m10, 1500, 9);
  HillClimbConfig hc;
  hc.seed = 77;
  hc.n_restarts = 4;
  const auto a = optimal_design(2, ps, m10.errors, m10.population, hc);
  const auto b = optimal_design(2, ps, m10.errors, m10.population, hc);
  hc.workers = 3;
  const auto c = optimal_design(2, ps, m10.errors, m10.population, hc);
  CHECK(a.design == b.design);
  CHECK(a.design == c.design);
  CHECK(a.estimate.value == c.estimate.value);
  CHECK(legal(a.design, 10, 2));

  std::map<int, double> last;
  for (const auto& s : a.trace) {
    if (s.step == 0) {
      CHECK(a.estimate.value >= s.best_value);
    } else {
      CHECK(s.best_value >= last[s.restart]);
    }
    last[s.restart] = s.best_value;
  }
  const auto report = ordered_json::parse(search_trace_report(a));
  CHECK(report.at("trace").size() == a.trace.size());
  CHECK(report.at("design").size() == 2);
}

TEST_CASE("hill climbing finds the best single pool on the three-person cluster") {
  const Model m = oracle_instance();
  const auto prior = exact_posterior(m, {}, {});
  double best = 0.0;
  for (std::uint64_t mask = 1; mask < 8; ++mask) best = std::max(best, exact_mi({Pool(mask)}, prior, m.errors));
  HillClimbConfig hc;
  hc.seed = 5;
  const auto res = optimal_design(1, prior_samples(m, 5000, 10), m.errors, m.population, hc);
  CHECK(exact_mi(res.design, prior, m.errors) >= best - 0.01);
}

TEST_CASE("pairwise estimator cost grows quadratically in the sample count") {
  Model m;
  m.population = PopulationSpec::from_sizes({2, 3, 5});
  m.prior = {0.2, 0.2, 0.01};
  m.errors = {0.2, 0.01};
  const Design d{Pool{0, 1, 2}, Pool{3, 4, 5, 6}, Pool{7, 8, 9}};
  auto seconds = [&](int L) {
    const auto ps = prior_samples(m, L, 11);
    const MiEstimator est(ps.states, m.errors, 12);
    double best = 1e300;
    for (int rep = 0; rep < 3; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      volatile double v = est.evaluate(d, MiMethod::pairwise).value;
      (void)v;
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
  };
  const double slope = std::log(seconds(6000) / seconds(600)) / std::log(10.0);
  MESSAGE("empirical cost exponent " << slope);
  CHECK(slope >= 1.7);
  CHECK(slope <= 2.3);
}
