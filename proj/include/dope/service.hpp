#pragma once

// Live sessions of the sequential procedure with a human executor.
//
// Each session is event-sourced: every command appends records to
// <data_dir>/<id>.jsonl before the in-memory state changes, and the state is a
// fold over that log. Proposals and posterior updates run on a background
// thread; while one is running the session reports status "computing".

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dope/json_io.hpp"
#include "dope/procedure.hpp"
#include "dope/transcript.hpp"

namespace dope {

struct SessionConfig {
  Model model;
  DopeConfig dope;
};

/// Model fields plus k_pools_per_step, interval ([lower, upper] or null for
/// the empty interval), n_samples, burn_in, max_thinning, n_restarts,
/// n_perturbations, max_steps, max_rounds and seed.
ordered_json session_config_to_json(const SessionConfig& config);
SessionConfig session_config_from_json(const ordered_json& j, std::uint64_t default_seed);

enum class SessionStatus { computing, awaiting_results, stopped, failed };
const char* status_name(SessionStatus status);

struct PendingDesign {
  int round = 0;
  Design pools;
};

struct SessionView {
  std::string id;
  SessionStatus status = SessionStatus::computing;
  int round = 0;  // completed rounds
  std::vector<double> marginals;
  std::optional<PendingDesign> pending;
  std::optional<std::vector<std::uint8_t>> classification;
  bool aborted = false;
  int tests_used = 0;
  std::string error;
  ordered_json config;
  std::string created_at;
  std::string updated_at;
  std::vector<TranscriptRecord> transcript;
};

ordered_json view_to_json(const SessionView& view, bool include_transcript = true);

class service_error : public std::runtime_error {
 public:
  enum class Code { validation, not_found, conflict };
  service_error(Code code, const std::string& message, std::string field = {})
      : std::runtime_error(message), code_(code), field_(std::move(field)) {}
  Code code() const noexcept { return code_; }
  const std::string& field() const noexcept { return field_; }

 private:
  Code code_;
  std::string field_;
};

struct StoreOptions {
  std::filesystem::path data_dir;
  int workers = 1;  // design-search threads per computation
};

class SessionStore {
 public:
  /// Loads every session log found in the data directory; sessions whose log
  /// ends mid-computation resume it.
  explicit SessionStore(StoreOptions options);
  ~SessionStore();
  SessionStore(const SessionStore&) = delete;
  SessionStore& operator=(const SessionStore&) = delete;

  SessionView create(const ordered_json& payload);
  /// `expected_round`, when given, must match the pending design's round.
  SessionView submit(const std::string& id, const TestData& results, std::optional<int> expected_round = {});
  SessionView abort(const std::string& id);
  SessionView get(const std::string& id) const;
  std::vector<SessionView> list() const;
  /// Raw log text, byte-identical to the file.
  std::string transcript(const std::string& id) const;
  /// Blocks until the session has no computation in flight.
  SessionView wait(const std::string& id) const;

  const std::filesystem::path& data_dir() const { return options_.data_dir; }

 private:
  struct Session;
  std::shared_ptr<Session> find(const std::string& id) const;
  void launch(const std::shared_ptr<Session>& s);
  void compute(const std::shared_ptr<Session>& s);
  void append(Session& s, const TranscriptRecord& record);

  StoreOptions options_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

struct ReplayReport {
  bool ok = true;
  int records = 0;
  std::string message;
};

/// Recomputes every proposal and update in a session log from its
/// configuration and entered results, comparing them bit for bit.
ReplayReport replay_verify(const std::vector<TranscriptRecord>& log);
ReplayReport replay_verify(const std::filesystem::path& log_file);

}  // namespace dope
