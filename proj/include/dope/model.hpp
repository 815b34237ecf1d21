#pragma once

// Cluster prior over binary infection states, the pooled-test likelihood, and
// forward samplers for both.
//
// States and pools are bitmasks over at most 64 individuals. All probabilities
// are handled in log space; an impossible event is -infinity.

#include <bit>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "dope/rng.hpp"

namespace dope {

inline constexpr int kMaxIndividuals = 64;
inline constexpr int kMaxPoolSize = 32;

class InfectionState {
 public:
  InfectionState() = default;
  explicit InfectionState(int n, std::uint64_t bits = 0);
  static InfectionState from_vector(std::span<const int> bits);

  int size() const { return size_; }
  std::uint64_t bits() const { return bits_; }
  bool operator[](int i) const { return (bits_ >> i) & 1ULL; }
  void set(int i, bool infected) {
    const std::uint64_t m = 1ULL << i;
    bits_ = infected ? (bits_ | m) : (bits_ & ~m);
  }
  int count() const { return std::popcount(bits_); }
  std::vector<int> to_vector() const;

  friend bool operator==(const InfectionState&, const InfectionState&) = default;

 private:
  std::uint64_t bits_ = 0;
  int size_ = 0;
};

class Pool {
 public:
  Pool() = default;
  explicit Pool(std::uint64_t mask) : mask_(mask) {}
  Pool(std::initializer_list<int> members);
  static Pool from_members(std::span<const int> members);

  std::uint64_t mask() const { return mask_; }
  int size() const { return std::popcount(mask_); }
  bool empty() const { return mask_ == 0; }
  bool contains(int i) const { return (mask_ >> i) & 1ULL; }
  std::vector<int> members() const;
  int infected_count(const InfectionState& s) const { return std::popcount(mask_ & s.bits()); }

  friend bool operator==(const Pool&, const Pool&) = default;
  friend auto operator<=>(const Pool&, const Pool&) = default;

 private:
  std::uint64_t mask_ = 0;
};

/// Ordered pool collection; duplicates are allowed.
using Design = std::vector<Pool>;
/// One bit per pool, 1 = positive.
using TestData = std::vector<std::uint8_t>;

struct Cluster {
  int primary = 0;
  std::vector<int> secondaries;

  friend bool operator==(const Cluster&, const Cluster&) = default;
};

struct PopulationSpec {
  int n_individuals = 0;
  std::vector<Cluster> clusters;

  /// Consecutive clusters of the given sizes; the first member of each is primary.
  static PopulationSpec from_sizes(std::span<const int> sizes);
  static PopulationSpec from_sizes(std::initializer_list<int> sizes) {
    return from_sizes(std::span<const int>(sizes.begin(), sizes.size()));
  }
  /// Throws validation_error unless clusters partition {0..N-1}.
  void validate() const;

  friend bool operator==(const PopulationSpec&, const PopulationSpec&) = default;
};

struct PriorParams {
  double p_primary = 0.0;
  double p_secondary = 0.0;
  double p_basal = 0.0;

  void validate() const;
  friend bool operator==(const PriorParams&, const PriorParams&) = default;
};

struct TestErrorParams {
  double p_false_negative = 0.0;
  double p_false_positive = 0.0;

  void validate() const;
  friend bool operator==(const TestErrorParams&, const TestErrorParams&) = default;
};

/// Everything needed to evaluate the joint distribution of states and data.
struct Model {
  PopulationSpec population;
  PriorParams prior;
  TestErrorParams errors;
  bool enforce_pool_cap = true;

  int n() const { return population.n_individuals; }
  void validate() const;
  friend bool operator==(const Model&, const Model&) = default;
};

void validate_pool(const Pool& pool, int n_individuals, bool enforce_cap = true);
void validate_design(const Design& design, int n_individuals, bool enforce_cap = true);

// Prior

double prior_log_prob(const PopulationSpec& spec, const PriorParams& prior, const InfectionState& state);
InfectionState sample_prior_state(const PopulationSpec& spec, const PriorParams& prior, Rng& rng);
std::vector<InfectionState> sample_prior(const PopulationSpec& spec, const PriorParams& prior, Rng& rng,
                                         int count);
/// Expected fraction of infected individuals under the prior.
double expected_prevalence(const PopulationSpec& spec, const PriorParams& prior);

// Likelihood

/// Pr(negative) = (1 - Pfp) * Pfn^count.
double negative_probability(int infected_count, const TestErrorParams& err);
double positive_probability(int infected_count, const TestErrorParams& err);
double pool_log_likelihood(int infected_count, const TestErrorParams& err, bool positive);
double pool_log_likelihood(const Pool& pool, const TestErrorParams& err, const InfectionState& state,
                           bool positive);
double design_log_likelihood(const Design& design, const TestErrorParams& err, const InfectionState& state,
                             const TestData& data);

bool sample_pool_result(const Pool& pool, const TestErrorParams& err, const InfectionState& state, Rng& rng);
TestData sample_data(const Design& design, const TestErrorParams& err, const InfectionState& state, Rng& rng);

// Configuration file (JSON text). write_model output is canonical; reading a
// canonical file and writing it back reproduces it byte for byte.

std::string write_model(const Model& model);
Model read_model(const std::string& text);
Model load_model(const std::string& path);

}  // namespace dope
