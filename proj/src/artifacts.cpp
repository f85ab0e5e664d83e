#include "coopt/artifacts.hpp"

#include "coopt/io.hpp"

namespace coopt::artifacts {

namespace {

const Json& member(const Json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw ValidationError(std::string("missing key '") + key + "'");
  return *it;
}

}  // namespace

FieldReader::FieldReader(const Json& obj, std::string name) : j(obj), what(std::move(name)) {
  if (!j.is_object()) throw ValidationError(what + ": expected an object");
}

void FieldReader::finish() const {
  for (const auto& [key, value] : j.items()) {
    if (!seen.count(key)) throw ValidationError(what + ": unknown key '" + key + "'");
  }
}

Json to_json(const BatteryConfig& c) {
  return Json{{"e_min", c.e_min}, {"e_max", c.e_max}, {"p_min", c.p_min}, {"p_max", c.p_max},
              {"eta_c", c.eta_c}, {"eta_d", c.eta_d}, {"e_0", c.e_0}};
}

Json to_json(const PriceSet& p) { return Json{{"c_cons", p.c_cons}, {"c_inj", p.c_inj}, {"c_r", p.c_r}}; }

Json to_json(const TimeGrid& g) { return Json{{"n_t", g.n_t}, {"dt", g.dt}}; }

BatteryConfig battery_from_json(const Json& j, BatteryConfig c) {
  FieldReader r(j, "battery");
  r.read("e_min", c.e_min);
  r.read("e_max", c.e_max);
  r.read("p_min", c.p_min);
  r.read("p_max", c.p_max);
  r.read("eta_c", c.eta_c);
  r.read("eta_d", c.eta_d);
  r.read("e_0", c.e_0);
  r.finish();
  c.validate();
  return c;
}

PriceSet prices_from_json(const Json& j, PriceSet p) {
  FieldReader r(j, "prices");
  r.read("c_cons", p.c_cons);
  r.read("c_inj", p.c_inj);
  r.read("c_r", p.c_r);
  r.finish();
  p.validate();
  return p;
}

TimeGrid grid_from_json(const Json& j, TimeGrid g) {
  FieldReader r(j, "grid");
  r.read("n_t", g.n_t);
  r.read("dt", g.dt);
  r.finish();
  g.validate();
  return g;
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
  auto out = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = Json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    out.push_back(std::move(row));
  }
  return out;
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
  if (!j.is_array()) throw ValidationError("matrix: expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows == 0 ? 0 : static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ValidationError("matrix: ragged rows");
    }
    for (Eigen::Index k = 0; k < cols; ++k) {
      const Json& v = row[static_cast<std::size_t>(k)];
      if (!v.is_number()) throw ValidationError("matrix: non-numeric entry");
      m(i, k) = v.get<double>();
    }
  }
  return m;
}

Json vector_to_json(const Eigen::VectorXd& v) {
  auto out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::VectorXd vector_from_json(const Json& j) {
  if (!j.is_array()) throw ValidationError("vector: expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ValidationError("vector: non-numeric entry");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

Json to_json(const ScEnvelope& env) {
  return Json{{"e_min_sc", vector_to_json(env.e_min_sc)},
              {"e_max_sc", vector_to_json(env.e_max_sc)},
              {"p_min_sc", vector_to_json(env.p_min_sc)},
              {"p_max_sc", vector_to_json(env.p_max_sc)}};
}

ScEnvelope envelope_from_json(const Json& j) {
  ScEnvelope env;
  env.e_min_sc = vector_from_json(member(j, "e_min_sc"));
  env.e_max_sc = vector_from_json(member(j, "e_max_sc"));
  env.p_min_sc = vector_from_json(member(j, "p_min_sc"));
  env.p_max_sc = vector_from_json(member(j, "p_max_sc"));
  return env;
}

Json wrap(const std::string& format, const std::string& config_hash, const Hashes& inputs, const Json& payload) {
  Json j;
  j["format"] = format;
  j["version"] = kVersion;
  j["config_hash"] = config_hash;
  Json in = Json::object();
  for (const auto& [name, h] : inputs) in[name] = h;
  j["inputs"] = in;
  for (const auto& [key, value] : payload.items()) j[key] = value;
  return j;
}

const Json& expect_format(const Json& j, const std::string& format) {
  if (!j.is_object() || !j.contains("format") || j["format"] != format) {
    throw ValidationError("expected a '" + format + "' artifact");
  }
  if (!j.contains("version") || j["version"] != kVersion) {
    throw ValidationError("unsupported " + format + " artifact version");
  }
  return j;
}

Json model_payload(const UncertaintyModel& m) {
  return Json{{"n_t", m.n_t()},
              {"epsilon", m.epsilon},
              {"training_hash", m.training_hash},
              {"mean", vector_to_json(m.mean)},
              {"w", matrix_to_json(m.w)},
              {"w_inv", matrix_to_json(m.w_inv)},
              {"sigma_f", vector_to_json(m.sigma_f)},
              {"sigma_b", vector_to_json(m.sigma_b)}};
}

UncertaintyModel model_from_json(const Json& j) {
  expect_format(j, "coopt.model");
  UncertaintyModel m;
  m.epsilon = member(j, "epsilon").get<double>();
  m.training_hash = member(j, "training_hash").get<std::string>();
  m.mean = vector_from_json(member(j, "mean"));
  m.w = matrix_from_json(member(j, "w"));
  m.w_inv = matrix_from_json(member(j, "w_inv"));
  m.sigma_f = vector_from_json(member(j, "sigma_f"));
  m.sigma_b = vector_from_json(member(j, "sigma_b"));
  const Eigen::Index n = m.mean.size();
  if (m.w.rows() != n || m.w.cols() != n || m.w_inv.rows() != n || m.w_inv.cols() != n ||
      m.sigma_f.size() != n || m.sigma_b.size() != n) {
    throw ValidationError("model: inconsistent dimensions");
  }
  if (!(m.epsilon > 0.0 && m.epsilon < 1.0)) throw ValidationError("model: epsilon must lie in (0, 1)");
  return m;
}

Json policy_payload(const CoOptSolution& sol, const BatteryConfig& cfg, const TimeGrid& grid,
                    const PriceSet& prices) {
  Json j;
  j["status"] = std::string(to_string(sol.status));
  j["reduced_accuracy"] = sol.reduced_accuracy;
  j["grid"] = to_json(grid);
  j["battery"] = to_json(cfg);
  j["prices"] = to_json(prices);
  j["r"] = sol.r;
  j["d"] = matrix_to_json(sol.d);
  j["self_consumption"] = sol.p_cons.rows() > 0;
  j["envelope"] = to_json(sol.envelope);
  j["objective"] = sol.objective;
  j["sc_cost"] = sol.sc_cost;
  j["fcr_revenue"] = sol.fcr_revenue;
  j["iterations"] = sol.iterations;
  return j;
}

PolicyArtifact policy_from_json(const Json& j) {
  expect_format(j, "coopt.policy");
  PolicyArtifact a;
  a.grid = grid_from_json(member(j, "grid"));
  a.cfg = battery_from_json(member(j, "battery"));
  a.prices = prices_from_json(member(j, "prices"));
  const std::string status = member(j, "status").get<std::string>();
  a.solution.status = SolveStatus::numerical_trouble;
  for (auto s : {SolveStatus::optimal, SolveStatus::primal_infeasible, SolveStatus::dual_infeasible,
                 SolveStatus::max_iterations, SolveStatus::numerical_trouble}) {
    if (status == to_string(s)) a.solution.status = s;
  }
  a.solution.reduced_accuracy = member(j, "reduced_accuracy").get<bool>();
  a.solution.r = member(j, "r").get<double>();
  a.solution.d = matrix_from_json(member(j, "d"));
  a.solution.envelope = envelope_from_json(member(j, "envelope"));
  a.solution.objective = member(j, "objective").get<double>();
  a.solution.sc_cost = member(j, "sc_cost").get<double>();
  a.solution.fcr_revenue = member(j, "fcr_revenue").get<double>();
  a.solution.iterations = member(j, "iterations").get<int>();
  a.has_sc = member(j, "self_consumption").get<bool>();
  if (a.solution.d.rows() != a.grid.n_t || a.solution.envelope.n_t() != a.grid.n_t) {
    throw ValidationError("policy: dimensions do not match the grid");
  }
  a.solution.policy().validate();
  return a;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

void write_json(const std::filesystem::path& path, const Json& j) { io::write_text(path, dump(j)); }

Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(what + ": " + e.what());
  }
}

Json read_json(const std::filesystem::path& path) { return parse_json(io::read_text(path), path.string()); }

std::string hash(const Json& j) { return io::sha256_hex(j.dump()); }

}  // namespace coopt::artifacts
