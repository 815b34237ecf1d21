#include <fstream>
#include <sstream>

#include "dope/errors.hpp"
#include "dope/json_io.hpp"

namespace dope {

template <typename T>
T required_field(const ordered_json& j, const char* field) {
  if (!j.is_object() || !j.contains(field)) throw validation_error(field, std::string("missing field ") + field);
  try {
    return j.at(field).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw validation_error(field, std::string("field ") + field + " has the wrong type");
  }
}

template <typename T>
T optional_field(const ordered_json& j, const char* field, T fallback) {
  if (!j.is_object() || !j.contains(field) || j.at(field).is_null()) return fallback;
  return required_field<T>(j, field);
}

template double required_field<double>(const ordered_json&, const char*);
template int required_field<int>(const ordered_json&, const char*);
template bool required_field<bool>(const ordered_json&, const char*);
template std::uint64_t required_field<std::uint64_t>(const ordered_json&, const char*);
template std::string required_field<std::string>(const ordered_json&, const char*);
template double optional_field<double>(const ordered_json&, const char*, double);
template int optional_field<int>(const ordered_json&, const char*, int);
template bool optional_field<bool>(const ordered_json&, const char*, bool);
template std::uint64_t optional_field<std::uint64_t>(const ordered_json&, const char*, std::uint64_t);
template std::string optional_field<std::string>(const ordered_json&, const char*, std::string);

ordered_json pool_to_json(const Pool& pool) { return ordered_json(pool.members()); }

Pool pool_from_json(const ordered_json& j) {
  if (!j.is_array()) throw validation_error("pools", "a pool must be a list of indices");
  std::vector<int> members;
  for (const auto& m : j) {
    if (!m.is_number_integer()) throw validation_error("pools", "pool members must be integers");
    members.push_back(m.get<int>());
  }
  try {
    return Pool::from_members(members);
  } catch (const std::invalid_argument& e) {
    throw validation_error("pools", e.what());
  }
}

ordered_json design_to_json(const Design& design) {
  ordered_json out = ordered_json::array();
  for (const auto& p : design) out.push_back(pool_to_json(p));
  return out;
}

Design design_from_json(const ordered_json& j) {
  if (!j.is_array()) throw validation_error("pools", "a design must be a list of pools");
  Design d;
  for (const auto& p : j) d.push_back(pool_from_json(p));
  return d;
}

ordered_json model_to_json(const Model& model) {
  ordered_json clusters = ordered_json::array();
  for (const auto& c : model.population.clusters) {
    ordered_json members = ordered_json::array();
    members.push_back(c.primary);
    for (int s : c.secondaries) members.push_back(s);
    clusters.push_back(std::move(members));
  }
  ordered_json j;
  j["n_individuals"] = model.population.n_individuals;
  j["clusters"] = std::move(clusters);
  j["p_primary"] = model.prior.p_primary;
  j["p_secondary"] = model.prior.p_secondary;
  j["p_basal"] = model.prior.p_basal;
  j["p_false_negative"] = model.errors.p_false_negative;
  j["p_false_positive"] = model.errors.p_false_positive;
  if (!model.enforce_pool_cap) j["enforce_pool_cap"] = false;
  return j;
}

Model model_from_json(const ordered_json& j) {
  if (!j.is_object()) throw validation_error("config", "configuration must be an object");
  Model m;
  m.population.n_individuals = required_field<int>(j, "n_individuals");
  if (!j.contains("clusters") || !j.at("clusters").is_array())
    throw validation_error("clusters", "clusters must be a list of index lists");
  for (const auto& c : j.at("clusters")) {
    if (!c.is_array() || c.empty()) throw validation_error("clusters", "each cluster must be a nonempty index list");
    Cluster cluster;
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (!c[k].is_number_integer()) throw validation_error("clusters", "cluster members must be integers");
      if (k == 0)
        cluster.primary = c[k].get<int>();
      else
        cluster.secondaries.push_back(c[k].get<int>());
    }
    m.population.clusters.push_back(std::move(cluster));
  }
  m.prior.p_primary = required_field<double>(j, "p_primary");
  m.prior.p_secondary = required_field<double>(j, "p_secondary");
  m.prior.p_basal = required_field<double>(j, "p_basal");
  m.errors.p_false_negative = required_field<double>(j, "p_false_negative");
  m.errors.p_false_positive = required_field<double>(j, "p_false_positive");
  m.enforce_pool_cap = optional_field<bool>(j, "enforce_pool_cap", true);
  m.validate();
  return m;
}

std::string write_model(const Model& model) { return model_to_json(model).dump(2) + "\n"; }

Model read_model(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw validation_error("config", std::string("malformed configuration: ") + e.what());
  }
  return model_from_json(j);
}

Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return read_model(ss.str());
}

}  // namespace dope
