#include "dope/service.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "dope/errors.hpp"

namespace dope {

namespace {

std::string now_utc() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string random_id() {
  std::random_device rd;
  std::ostringstream os;
  os << std::hex;
  for (int i = 0; i < 4; ++i) {
    os.width(8);
    os.fill('0');
    os << rd();
  }
  return os.str();
}

// Below 2^53 so that JavaScript clients read it back exactly.
std::uint64_t random_seed() {
  std::random_device rd;
  const std::uint64_t hi = rd(), lo = rd();
  return ((hi << 32) | lo) & ((std::uint64_t{1} << 53) - 1);
}

// Result of one unit of session work: optionally ingest the pending results,
// then propose the next design unless the session stopped.
std::vector<TranscriptRecord> advance(SessionState& st, const SessionConfig& cfg, const Design* pools,
                                      const TestData* results) {
  std::vector<TranscriptRecord> out;
  if (results) {
    st = ingest(std::move(st), *pools, *results, cfg.dope, cfg.model);
    TranscriptRecord update{.kind = "update", .round = st.round, .marginals = st.marginals, .stopped = st.stopped};
    if (!st.stopped && st.round >= cfg.dope.effective_max_rounds(cfg.model.n())) {
      st.stopped = true;
      st.classification = classify(st.marginals);
      update.stopped = true;
      update.extra = {{"truncated", true}};
    }
    update.classification = st.classification;
    out.push_back(std::move(update));
  }
  if (!st.stopped) {
    Design next = propose(st, cfg.dope, cfg.model);
    out.push_back({.kind = "proposal", .round = st.round + 1, .pools = std::move(next), .marginals = st.marginals});
  }
  return out;
}

bool same_content(const TranscriptRecord& a, const TranscriptRecord& b) {
  return a.kind == b.kind && a.round == b.round && a.pools == b.pools && a.results == b.results &&
         a.marginals == b.marginals && a.stopped == b.stopped && a.classification == b.classification;
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

ordered_json session_config_to_json(const SessionConfig& c) {
  ordered_json j = model_to_json(c.model);
  const auto& d = c.dope;
  j["k_pools_per_step"] = d.k_pools_per_step;
  if (d.interval.empty)
    j["interval"] = nullptr;
  else
    j["interval"] = {d.interval.lower, d.interval.upper};
  j["n_samples"] = d.gibbs.n_samples;
  j["burn_in"] = d.gibbs.burn_in;
  j["max_thinning"] = d.gibbs.max_thinning;
  j["n_restarts"] = d.hill_climb.n_restarts;
  j["n_perturbations"] = d.hill_climb.n_perturbations;
  j["max_steps"] = d.hill_climb.max_steps;
  j["max_rounds"] = d.max_rounds;
  j["seed"] = d.seed;
  return j;
}

SessionConfig session_config_from_json(const ordered_json& j, std::uint64_t default_seed) {
  SessionConfig c;
  c.model = model_from_json(j);
  auto& d = c.dope;
  d.k_pools_per_step = optional_field<int>(j, "k_pools_per_step", d.k_pools_per_step);
  if (j.contains("interval")) {
    const auto& i = j.at("interval");
    if (i.is_null()) {
      d.interval = DecisionInterval::none();
    } else {
      if (!i.is_array() || i.size() != 2 || !i[0].is_number() || !i[1].is_number())
        throw validation_error("interval", "interval must be [lower, upper] or null");
      d.interval = DecisionInterval::closed(i[0].get<double>(), i[1].get<double>());
    }
  }
  d.gibbs.n_samples = optional_field<int>(j, "n_samples", d.gibbs.n_samples);
  d.gibbs.burn_in = optional_field<int>(j, "burn_in", d.gibbs.burn_in);
  d.gibbs.max_thinning = optional_field<int>(j, "max_thinning", d.gibbs.max_thinning);
  d.hill_climb.n_restarts = optional_field<int>(j, "n_restarts", d.hill_climb.n_restarts);
  d.hill_climb.n_perturbations = optional_field<int>(j, "n_perturbations", d.hill_climb.n_perturbations);
  d.hill_climb.max_steps = optional_field<int>(j, "max_steps", d.hill_climb.max_steps);
  d.max_rounds = optional_field<int>(j, "max_rounds", d.max_rounds);
  d.seed = optional_field<std::uint64_t>(j, "seed", default_seed);
  d.validate();
  return c;
}

const char* status_name(SessionStatus status) {
  switch (status) {
    case SessionStatus::computing: return "computing";
    case SessionStatus::awaiting_results: return "awaiting_results";
    case SessionStatus::stopped: return "stopped";
    case SessionStatus::failed: return "failed";
  }
  return "failed";
}

ordered_json view_to_json(const SessionView& v, bool include_transcript) {
  ordered_json j;
  j["id"] = v.id;
  j["status"] = status_name(v.status);
  j["round"] = v.round;
  j["stopped"] = v.status == SessionStatus::stopped;
  j["aborted"] = v.aborted;
  j["tests_used"] = v.tests_used;
  j["marginals"] = v.marginals;
  if (v.pending) {
    j["pending_design"] = {{"round", v.pending->round}, {"pools", design_to_json(v.pending->pools)}};
    j["next_design"] = design_to_json(v.pending->pools);
  }
  if (v.classification) j["classification"] = *v.classification;
  if (!v.error.empty()) j["error"] = v.error;
  j["config"] = v.config;
  j["created_at"] = v.created_at;
  j["updated_at"] = v.updated_at;
  if (include_transcript) {
    ordered_json t = ordered_json::array();
    for (const auto& r : v.transcript) t.push_back(record_to_json(r));
    j["transcript"] = std::move(t);
  }
  return j;
}

struct SessionStore::Session {
  std::string id;
  SessionConfig config;
  ordered_json config_json;
  std::filesystem::path file;

  mutable std::mutex mu;
  mutable std::condition_variable idle;
  SessionStatus status = SessionStatus::computing;
  SessionState state;
  std::optional<PendingDesign> pending;
  std::optional<TestData> pending_results;
  bool aborted = false;
  std::string error;
  std::string created_at;
  std::string updated_at;
  std::vector<TranscriptRecord> log;
  std::string log_text;
  std::future<void> task;

  // Folds one record into the state. Used both live and on reload.
  void apply(const TranscriptRecord& r) {
    if (r.kind == "proposal") {
      pending = PendingDesign{r.round, r.pools.value_or(Design{})};
      if (r.marginals) state.marginals = *r.marginals;
      status = SessionStatus::awaiting_results;
    } else if (r.kind == "results") {
      pending_results = r.results.value_or(TestData{});
      status = SessionStatus::computing;
    } else if (r.kind == "update") {
      if (pending && pending_results) {
        state.design.insert(state.design.end(), pending->pools.begin(), pending->pools.end());
        state.data.insert(state.data.end(), pending_results->begin(), pending_results->end());
      }
      state.round = r.round;
      if (r.marginals) state.marginals = *r.marginals;
      state.stopped = r.stopped.value_or(false);
      state.classification = r.classification;
      pending.reset();
      pending_results.reset();
      status = state.stopped ? SessionStatus::stopped : SessionStatus::computing;
    } else if (r.kind == "abort") {
      aborted = true;
      state.stopped = true;
      state.classification = r.classification;
      pending.reset();
      status = SessionStatus::stopped;
    } else if (r.kind == "error") {
      error = r.extra.is_object() && r.extra.contains("message") ? r.extra.at("message").get<std::string>()
                                                                 : std::string("computation failed");
      pending.reset();
      status = SessionStatus::failed;
    }
    if (r.extra.is_object() && r.extra.contains("at")) updated_at = r.extra.at("at").get<std::string>();
  }

  SessionView view() const {
    SessionView v;
    v.id = id;
    v.status = status;
    v.round = state.round;
    v.marginals = state.marginals;
    if (status == SessionStatus::awaiting_results) v.pending = pending;
    if (status == SessionStatus::stopped) v.classification = state.classification;
    v.aborted = aborted;
    v.tests_used = static_cast<int>(state.design.size());
    v.error = error;
    v.config = config_json;
    v.created_at = created_at;
    v.updated_at = updated_at;
    v.transcript = log;
    return v;
  }
};

SessionStore::SessionStore(StoreOptions options) : options_(std::move(options)) {
  if (options_.workers < 1) options_.workers = 1;
  std::filesystem::create_directories(options_.data_dir);
  for (const auto& entry : std::filesystem::directory_iterator(options_.data_dir)) {
    if (entry.path().extension() != ".jsonl") continue;
    try {
      const std::string text = read_text(entry.path());
      auto records = parse_transcript(text);
      if (records.empty() || records.front().kind != "created") throw std::runtime_error("missing created record");
      auto s = std::make_shared<Session>();
      const auto& head = records.front();
      s->id = head.extra.at("id").get<std::string>();
      s->config_json = head.extra.at("config");
      s->config = session_config_from_json(s->config_json, 0);
      s->config.dope.hill_climb.workers = options_.workers;
      s->created_at = head.extra.value("at", std::string());
      s->file = entry.path();
      s->log_text = text;
      for (const auto& r : records) s->apply(r);
      s->log = std::move(records);
      sessions_[s->id] = s;
      if (s->status == SessionStatus::computing) launch(s);
    } catch (const std::exception& e) {
      std::cerr << "skipping session log " << entry.path() << ": " << e.what() << "\n";
    }
  }
}

SessionStore::~SessionStore() {
  std::vector<std::shared_ptr<Session>> all;
  {
    std::lock_guard lock(mu_);
    for (auto& [id, s] : sessions_) all.push_back(s);
  }
  for (auto& s : all) {
    std::future<void> task;
    {
      std::lock_guard lock(s->mu);
      task = std::move(s->task);
    }
    if (task.valid()) task.wait();
  }
}

void SessionStore::append(Session& s, const TranscriptRecord& record) {
  const std::string line = format_record(record);
  {
    std::ofstream out(s.file, std::ios::binary | std::ios::app);
    out << line;
    out.flush();
    if (!out) throw std::runtime_error("cannot append to " + s.file.string());
  }
  s.log_text += line;
  s.log.push_back(record);
  s.apply(record);
}

void SessionStore::launch(const std::shared_ptr<Session>& s) {
  // The previous task, if any, has already published its result.
  s->task = std::async(std::launch::async, [this, s] { compute(s); });
}

void SessionStore::compute(const std::shared_ptr<Session>& s) {
  SessionState st;
  std::optional<Design> pools;
  std::optional<TestData> results;
  {
    std::lock_guard lock(s->mu);
    st = s->state;
    if (s->pending_results && s->pending) {
      pools = s->pending->pools;
      results = s->pending_results;
    }
  }
  std::vector<TranscriptRecord> records;
  std::string failure;
  try {
    records = advance(st, s->config, pools ? &*pools : nullptr, results ? &*results : nullptr);
  } catch (const std::exception& e) {
    failure = e.what();
  }
  {
    std::lock_guard lock(s->mu);
    try {
      if (!failure.empty()) {
        append(*s, {.kind = "error", .round = st.round, .extra = {{"message", failure}, {"at", now_utc()}}});
      } else {
        for (auto& r : records) {
          if (r.extra.is_null()) r.extra = ordered_json::object();
          r.extra["at"] = now_utc();
          append(*s, r);
        }
        // Keep the samples cached by the computation for the next proposal.
        s->state = std::move(st);
      }
    } catch (const std::exception& e) {
      s->error = e.what();
      s->status = SessionStatus::failed;
    }
  }
  s->idle.notify_all();
}

std::shared_ptr<SessionStore::Session> SessionStore::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw service_error(service_error::Code::not_found, "unknown session " + id);
  return it->second;
}

SessionView SessionStore::create(const ordered_json& payload) {
  SessionConfig config;
  try {
    config = session_config_from_json(payload, random_seed());
  } catch (const validation_error& e) {
    throw service_error(service_error::Code::validation, e.what(), e.field());
  }
  auto s = std::make_shared<Session>();
  s->config = config;
  s->config_json = session_config_to_json(config);
  s->config.dope.hill_climb.workers = options_.workers;
  s->created_at = now_utc();
  {
    std::lock_guard lock(mu_);
    do {
      s->id = random_id();
    } while (sessions_.count(s->id));
    s->file = options_.data_dir / (s->id + ".jsonl");
    sessions_[s->id] = s;
  }
  std::lock_guard lock(s->mu);
  append(*s, {.kind = "created",
              .round = 0,
              .extra = {{"id", s->id}, {"config", s->config_json}, {"at", s->created_at}}});
  s->status = SessionStatus::computing;
  launch(s);
  return s->view();
}

SessionView SessionStore::submit(const std::string& id, const TestData& results, std::optional<int> expected_round) {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  if (s->status == SessionStatus::stopped || s->status == SessionStatus::failed)
    throw service_error(service_error::Code::conflict, "session is no longer accepting results");
  if (s->status != SessionStatus::awaiting_results || !s->pending)
    throw service_error(service_error::Code::conflict, "no design is awaiting results");
  if (expected_round && *expected_round != s->pending->round)
    throw service_error(service_error::Code::conflict, "results are for round " + std::to_string(*expected_round) +
                                                            " but round " + std::to_string(s->pending->round) +
                                                            " is pending",
                        "round");
  if (results.size() != s->pending->pools.size())
    throw service_error(service_error::Code::validation,
                        "expected " + std::to_string(s->pending->pools.size()) + " results", "results");
  for (auto r : results)
    if (r > 1) throw service_error(service_error::Code::validation, "results must be 0 or 1", "results");
  append(*s, {.kind = "results", .round = s->pending->round, .results = results, .extra = {{"at", now_utc()}}});
  launch(s);
  return s->view();
}

SessionView SessionStore::abort(const std::string& id) {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  if (s->status == SessionStatus::stopped || s->status == SessionStatus::failed)
    throw service_error(service_error::Code::conflict, "session has already stopped");
  if (s->status == SessionStatus::computing)
    throw service_error(service_error::Code::conflict, "a computation is in progress; retry when it completes");
  append(*s, {.kind = "abort",
              .round = s->state.round,
              .marginals = s->state.marginals,
              .stopped = true,
              .classification = classify(s->state.marginals),
              .extra = {{"at", now_utc()}}});
  return s->view();
}

SessionView SessionStore::get(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  return s->view();
}

SessionView SessionStore::wait(const std::string& id) const {
  auto s = find(id);
  std::unique_lock lock(s->mu);
  s->idle.wait(lock, [&] { return s->status != SessionStatus::computing; });
  return s->view();
}

std::vector<SessionView> SessionStore::list() const {
  std::vector<std::shared_ptr<Session>> all;
  {
    std::lock_guard lock(mu_);
    for (auto& [id, s] : sessions_) all.push_back(s);
  }
  std::vector<SessionView> out;
  for (auto& s : all) {
    std::lock_guard lock(s->mu);
    auto v = s->view();
    v.transcript.clear();
    out.push_back(std::move(v));
  }
  return out;
}

std::string SessionStore::transcript(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  return s->log_text;
}

ReplayReport replay_verify(const std::vector<TranscriptRecord>& log) {
  ReplayReport rep;
  auto fail = [&](std::size_t i, const std::string& why) {
    rep.ok = false;
    rep.message = "record " + std::to_string(i + 1) + ": " + why;
    return rep;
  };
  if (log.empty() || log.front().kind != "created") return fail(0, "log does not start with a created record");
  SessionConfig cfg;
  try {
    cfg = session_config_from_json(log.front().extra.at("config"), 0);
  } catch (const std::exception& e) {
    return fail(0, e.what());
  }
  SessionState st;
  std::optional<Design> pools;
  std::optional<TestData> results;
  std::size_t i = 1;
  while (i < log.size()) {
    std::vector<TranscriptRecord> produced;
    try {
      produced = advance(st, cfg, results ? &*pools : nullptr, results ? &*results : nullptr);
    } catch (const std::exception& e) {
      if (log[i].kind != "error") return fail(i, std::string("replay raised: ") + e.what());
      ++i;
      break;
    }
    results.reset();
    for (const auto& r : produced) {
      if (i >= log.size()) break;  // log ends mid-computation
      if (!same_content(r, log[i])) return fail(i, "recomputed " + r.kind + " differs from the log");
      if (r.kind == "proposal") pools = r.pools;
      ++i;
    }
    if (i >= log.size()) break;
    const auto& next = log[i];
    if (next.kind == "results") {
      if (!pools || !next.results || next.results->size() != pools->size()) return fail(i, "results do not fit");
      results = next.results;
      ++i;
      if (i >= log.size()) break;
    } else if (next.kind == "abort") {
      if (next.classification != classify(st.marginals)) return fail(i, "abort classification differs");
      if (next.marginals != st.marginals) return fail(i, "abort marginals differ");
      ++i;
      break;
    } else {
      return fail(i, "unexpected " + next.kind + " record");
    }
  }
  if (i < log.size()) return fail(i, "records after the end of the session");
  rep.records = static_cast<int>(log.size());
  return rep;
}

ReplayReport replay_verify(const std::filesystem::path& log_file) {
  return replay_verify(parse_transcript(read_text(log_file)));
}

}  // namespace dope
