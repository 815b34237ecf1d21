#pragma once

// JSON conversions for the model types, shared by the configuration files,
// transcripts, scenario files and the HTTP API.

#include "json.hpp"

#include "dope/model.hpp"

namespace dope {

using ordered_json = nlohmann::ordered_json;

ordered_json pool_to_json(const Pool& pool);
Pool pool_from_json(const ordered_json& j);
ordered_json design_to_json(const Design& design);
Design design_from_json(const ordered_json& j);

/// Model fields in configuration-file order.
ordered_json model_to_json(const Model& model);
/// Validates as it reads; errors carry the offending field name.
Model model_from_json(const ordered_json& j);

/// Reads a required field, raising validation_error naming it on absence or type mismatch.
template <typename T>
T required_field(const ordered_json& j, const char* field);

template <typename T>
T optional_field(const ordered_json& j, const char* field, T fallback);

}  // namespace dope
