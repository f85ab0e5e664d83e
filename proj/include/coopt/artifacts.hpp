#pragma once

// JSON forms of configurations, fitted models and solved policies. Every
// artifact carries a format tag, a version, the hash of the configuration it
// was produced under, and hashes of its inputs. No timestamps, so reruns are
// byte-identical.

#include <filesystem>
#include <map>
#include <set>
#include <string>

#include <Eigen/Core>

#include "coopt/model.hpp"
#include "coopt/optimizer.hpp"
#include "coopt/policies.hpp"
#include "coopt/uncertainty.hpp"
#include "json.hpp"

namespace coopt::artifacts {

using Json = nlohmann::ordered_json;

inline constexpr int kVersion = 1;

/// Reads named keys of a JSON object into fields; finish() rejects any key
/// that was not asked for.
struct FieldReader {
  const Json& j;
  std::string what;
  std::set<std::string> seen;

  FieldReader(const Json& obj, std::string name);

  template <class T>
  void read(const char* key, T& field) {
    seen.insert(key);
    const auto it = j.find(key);
    if (it == j.end()) return;
    try {
      field = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(what + "." + key + ": " + e.what());
    }
  }
  void skip(const char* key) { seen.insert(key); }
  void finish() const;
};

/// Missing keys keep their defaults; unknown keys are a ValidationError.
Json to_json(const BatteryConfig& cfg);
Json to_json(const PriceSet& prices);
Json to_json(const TimeGrid& grid);
BatteryConfig battery_from_json(const Json& j, BatteryConfig base = {});
PriceSet prices_from_json(const Json& j, PriceSet base = {});
TimeGrid grid_from_json(const Json& j, TimeGrid base = {});

Json matrix_to_json(const Eigen::MatrixXd& m);  // array of rows
Eigen::MatrixXd matrix_from_json(const Json& j);
Json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const Json& j);

Json to_json(const ScEnvelope& env);
ScEnvelope envelope_from_json(const Json& j);

using Hashes = std::map<std::string, std::string>;

/// {"format", "version", "config_hash", "inputs"} followed by the payload keys.
Json wrap(const std::string& format, const std::string& config_hash, const Hashes& inputs, const Json& payload);
/// Checks the format tag and version, returns the object.
const Json& expect_format(const Json& j, const std::string& format);

Json model_payload(const UncertaintyModel& model);
UncertaintyModel model_from_json(const Json& j);

/// Policy artifact: reserve, D (row-major), envelope, grid, battery, prices,
/// objective terms and solver status.
Json policy_payload(const CoOptSolution& sol, const BatteryConfig& cfg, const TimeGrid& grid,
                    const PriceSet& prices);

struct PolicyArtifact {
  CoOptSolution solution;  // status, r, d, envelope, objective terms
  BatteryConfig cfg;
  TimeGrid grid;
  PriceSet prices;
  bool has_sc = false;
};
PolicyArtifact policy_from_json(const Json& j);

/// Indented dump with a trailing newline.
std::string dump(const Json& j);
void write_json(const std::filesystem::path& path, const Json& j);
/// Parse errors become ValidationError.
Json read_json(const std::filesystem::path& path);
Json parse_json(const std::string& text, const std::string& what);
std::string hash(const Json& j);

}  // namespace coopt::artifacts
