#pragma once

// Append-only session transcript: one JSON object per line.
//
//   {"kind":"proposal","round":1,"pools":[[0,1],[2]],"marginals":[...]}
//   {"kind":"results","round":1,"results":[1,0]}
//   {"kind":"update","round":1,"marginals":[...],"stopped":false}
//   {"kind":"test","round":1,"pools":[[0,1]],"results":[1]}
//
// Fields absent from a record are omitted from its line.

#include <optional>
#include <string>
#include <vector>

#include "dope/json_io.hpp"
#include "dope/model.hpp"

namespace dope {

struct TranscriptRecord {
  std::string kind;
  int round = 0;
  std::optional<Design> pools;
  std::optional<TestData> results;
  std::optional<std::vector<double>> marginals;
  std::optional<bool> stopped;
  std::optional<std::vector<std::uint8_t>> classification;
  ordered_json extra;  // kind-specific payload (e.g. configuration), null when unused

  friend bool operator==(const TranscriptRecord&, const TranscriptRecord&) = default;
};

ordered_json record_to_json(const TranscriptRecord& record);
TranscriptRecord record_from_json(const ordered_json& j);

std::string format_record(const TranscriptRecord& record);  // single line with trailing newline
TranscriptRecord parse_record(const std::string& line);

std::string format_transcript(const std::vector<TranscriptRecord>& records);
std::vector<TranscriptRecord> parse_transcript(const std::string& text);

}  // namespace dope
