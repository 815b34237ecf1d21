#include "dope/transcript.hpp"

#include <sstream>

#include "dope/errors.hpp"

namespace dope {

ordered_json record_to_json(const TranscriptRecord& r) {
  ordered_json j;
  j["kind"] = r.kind;
  j["round"] = r.round;
  if (r.pools) j["pools"] = design_to_json(*r.pools);
  if (r.results) j["results"] = *r.results;
  if (r.marginals) j["marginals"] = *r.marginals;
  if (r.stopped) j["stopped"] = *r.stopped;
  if (r.classification) j["classification"] = *r.classification;
  if (!r.extra.is_null()) j["extra"] = r.extra;
  return j;
}

TranscriptRecord record_from_json(const ordered_json& j) {
  TranscriptRecord r;
  r.kind = required_field<std::string>(j, "kind");
  r.round = required_field<int>(j, "round");
  if (j.contains("pools")) r.pools = design_from_json(j.at("pools"));
  if (j.contains("results")) r.results = j.at("results").get<TestData>();
  if (j.contains("marginals")) r.marginals = j.at("marginals").get<std::vector<double>>();
  if (j.contains("stopped")) r.stopped = j.at("stopped").get<bool>();
  if (j.contains("classification")) r.classification = j.at("classification").get<std::vector<std::uint8_t>>();
  if (j.contains("extra")) r.extra = j.at("extra");
  return r;
}

std::string format_record(const TranscriptRecord& record) { return record_to_json(record).dump() + "\n"; }

TranscriptRecord parse_record(const std::string& line) {
  try {
    return record_from_json(ordered_json::parse(line));
  } catch (const nlohmann::json::exception& e) {
    throw validation_error("transcript", std::string("malformed transcript record: ") + e.what());
  }
}

std::string format_transcript(const std::vector<TranscriptRecord>& records) {
  std::string out;
  for (const auto& r : records) out += format_record(r);
  return out;
}

std::vector<TranscriptRecord> parse_transcript(const std::string& text) {
  std::vector<TranscriptRecord> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(parse_record(line));
  return out;
}

}  // namespace dope
