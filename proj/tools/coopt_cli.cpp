// coopt: ingestion, fitting, optimization, reduction, gap estimation,
// simulation and parameter studies from the command line.
//
// Exit codes: 0 success, 2 invalid input or configuration, 3 solver failure.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "coopt/artifacts.hpp"
#include "coopt/frequency.hpp"
#include "coopt/io.hpp"
#include "coopt/optimizer.hpp"
#include "coopt/scenarios.hpp"
#include "coopt/simulator.hpp"
#include "coopt/uncertainty.hpp"

namespace fs = std::filesystem;
using namespace coopt;
using artifacts::FieldReader;
using artifacts::Json;

namespace {

struct RunConfig {
  BatteryConfig battery;
  std::optional<double> round_trip;
  PriceSet prices;
  TimeGrid grid;
  double epsilon = 1e-4;
  std::optional<std::uint64_t> seed;
  std::string solver = "";
  // ingestion
  bool fold = true;
  bool clamp = true;
  int max_gap_s = 60;
  double train_fraction = 0.7;
  // profiles
  ProfileKind profile_kind = ProfileKind::net;
  ProfileParams profiles;
  SyntheticFrequencyParams synthetic_frequency;
  // gap
  int gap_n_u = 10000;
  int gap_n_l = 10;
  int gap_n_sc = 250;
  double gap_alpha = 0.005;
  // simulation
  int n_resample = 10000;
  double sim_alpha = 0.01;
  std::vector<double> quantiles{0.01, 0.5, 0.99};
  // studies
  std::vector<double> study_epsilon{1e-4, 1e-3, 1e-2, 1e-1};
  std::vector<double> study_c_rate{0.25, 0.5, 1.0, 2.0, 4.0};
  std::vector<double> study_c_r{0.0, 5.0, 10.0, 14.71, 20.0, 30.0, 40.0};

  std::uint64_t require_seed() const {
    if (!seed) throw ValidationError("this command is stochastic: pass --seed or set \"seed\" in the config");
    return *seed;
  }
};

Json profile_params_json(const ProfileParams& p) {
  return Json{{"base_kw", p.base_kw},
              {"morning_kw", p.morning_kw},
              {"morning_hour", p.morning_hour},
              {"morning_width_h", p.morning_width_h},
              {"evening_kw", p.evening_kw},
              {"evening_hour", p.evening_hour},
              {"evening_width_h", p.evening_width_h},
              {"demand_noise", p.demand_noise},
              {"pv_kwp", p.pv_kwp},
              {"peak_fraction", p.peak_fraction},
              {"sunrise_hour", p.sunrise_hour},
              {"sunset_hour", p.sunset_hour},
              {"cloudiness", p.cloudiness},
              {"pv_noise", p.pv_noise}};
}

void read_profile_params(const Json& j, RunConfig& c) {
  FieldReader r(j, "profiles");
  std::string kind(to_string(c.profile_kind));
  r.read("kind", kind);
  c.profile_kind = parse_profile_kind(kind);
  ProfileParams& p = c.profiles;
  r.read("base_kw", p.base_kw);
  r.read("morning_kw", p.morning_kw);
  r.read("morning_hour", p.morning_hour);
  r.read("morning_width_h", p.morning_width_h);
  r.read("evening_kw", p.evening_kw);
  r.read("evening_hour", p.evening_hour);
  r.read("evening_width_h", p.evening_width_h);
  r.read("demand_noise", p.demand_noise);
  r.read("pv_kwp", p.pv_kwp);
  r.read("peak_fraction", p.peak_fraction);
  r.read("sunrise_hour", p.sunrise_hour);
  r.read("sunset_hour", p.sunset_hour);
  r.read("cloudiness", p.cloudiness);
  r.read("pv_noise", p.pv_noise);
  r.finish();
}

Json to_json(const RunConfig& c) {
  Json j;
  j["battery"] = artifacts::to_json(c.battery);
  j["round_trip"] = c.round_trip ? Json(*c.round_trip) : Json(nullptr);
  j["prices"] = artifacts::to_json(c.prices);
  j["grid"] = artifacts::to_json(c.grid);
  j["epsilon"] = c.epsilon;
  j["seed"] = c.seed ? Json(*c.seed) : Json(nullptr);
  j["solver"] = c.solver;
  j["ingest"] = {{"fold", c.fold}, {"clamp", c.clamp}, {"max_gap_s", c.max_gap_s},
                 {"train_fraction", c.train_fraction}};
  Json prof = profile_params_json(c.profiles);
  prof["kind"] = std::string(to_string(c.profile_kind));
  j["profiles"] = prof;
  const auto& f = c.synthetic_frequency;
  j["synthetic_frequency"] = {{"fast_std", f.fast_std},       {"fast_tau_s", f.fast_tau_s},
                              {"slow_std", f.slow_std},       {"slow_tau_s", f.slow_tau_s},
                              {"hourly_step", f.hourly_step}, {"missing_rate", f.missing_rate},
                              {"outage_rate", f.outage_rate}};
  j["gap"] = {{"n_u", c.gap_n_u}, {"n_l", c.gap_n_l}, {"n_sc", c.gap_n_sc}, {"alpha", c.gap_alpha}};
  j["simulation"] = {{"n_resample", c.n_resample}, {"alpha", c.sim_alpha}, {"quantiles", c.quantiles}};
  j["study"] = {{"epsilon", c.study_epsilon}, {"c_rate", c.study_c_rate}, {"c_r", c.study_c_r}};
  return j;
}

RunConfig config_from_json(const Json& j) {
  RunConfig c;
  FieldReader top(j, "config");
  top.skip("battery");
  top.skip("prices");
  top.skip("grid");
  top.skip("ingest");
  top.skip("profiles");
  top.skip("synthetic_frequency");
  top.skip("gap");
  top.skip("simulation");
  top.skip("study");
  top.skip("round_trip");
  top.skip("seed");
  top.read("epsilon", c.epsilon);
  top.read("solver", c.solver);
  top.finish();
  if (j.contains("battery")) c.battery = artifacts::battery_from_json(j["battery"]);
  if (j.contains("round_trip") && !j["round_trip"].is_null()) c.round_trip = j["round_trip"].get<double>();
  if (j.contains("seed") && !j["seed"].is_null()) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("prices")) c.prices = artifacts::prices_from_json(j["prices"]);
  if (j.contains("grid")) c.grid = artifacts::grid_from_json(j["grid"]);
  if (j.contains("ingest")) {
    FieldReader r(j["ingest"], "ingest");
    r.read("fold", c.fold);
    r.read("clamp", c.clamp);
    r.read("max_gap_s", c.max_gap_s);
    r.read("train_fraction", c.train_fraction);
    r.finish();
  }
  if (j.contains("profiles")) read_profile_params(j["profiles"], c);
  if (j.contains("synthetic_frequency")) {
    FieldReader r(j["synthetic_frequency"], "synthetic_frequency");
    auto& f = c.synthetic_frequency;
    r.read("fast_std", f.fast_std);
    r.read("fast_tau_s", f.fast_tau_s);
    r.read("slow_std", f.slow_std);
    r.read("slow_tau_s", f.slow_tau_s);
    r.read("hourly_step", f.hourly_step);
    r.read("missing_rate", f.missing_rate);
    r.read("outage_rate", f.outage_rate);
    r.finish();
  }
  if (j.contains("gap")) {
    FieldReader r(j["gap"], "gap");
    r.read("n_u", c.gap_n_u);
    r.read("n_l", c.gap_n_l);
    r.read("n_sc", c.gap_n_sc);
    r.read("alpha", c.gap_alpha);
    r.finish();
  }
  if (j.contains("simulation")) {
    FieldReader r(j["simulation"], "simulation");
    r.read("n_resample", c.n_resample);
    r.read("alpha", c.sim_alpha);
    r.read("quantiles", c.quantiles);
    r.finish();
  }
  if (j.contains("study")) {
    FieldReader r(j["study"], "study");
    r.read("epsilon", c.study_epsilon);
    r.read("c_rate", c.study_c_rate);
    r.read("c_r", c.study_c_r);
    r.finish();
  }
  c.profiles.n_t = c.grid.n_t;
  if (c.round_trip) {
    if (!(*c.round_trip > 0.0 && *c.round_trip <= 1.0)) throw ValidationError("round_trip must lie in (0, 1]");
    c.battery = c.battery.with_round_trip(*c.round_trip);
  }
  c.battery.validate();
  c.prices.validate();
  c.grid.validate();
  c.profiles.validate();
  if (!(c.epsilon > 0.0 && c.epsilon < 1.0)) throw ValidationError("epsilon must lie in (0, 1)");
  return c;
}

// "a.b.c=value": value parsed as JSON, else taken as a string.
void apply_override(Json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("--set expects key=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  Json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ValidationError("--set: empty key in '" + path + "'");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      break;
    }
    if (!node->contains(key) || !(*node)[key].is_object()) (*node)[key] = Json::object();
    node = &(*node)[key];
    start = dot + 1;
  }
}

struct Globals {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<double> epsilon;
  std::optional<int> n_t;
  std::optional<double> dt;
  std::optional<double> round_trip;
  std::optional<double> c_r;
  std::string solver;
  std::string out = ".";
};

RunConfig load_config(const Globals& g) {
  Json j = Json::object();
  if (!g.config_path.empty()) j = artifacts::read_json(g.config_path);
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  for (const auto& s : g.sets) apply_override(j, s);
  if (g.seed) j["seed"] = *g.seed;
  if (g.epsilon) j["epsilon"] = *g.epsilon;
  if (g.n_t) {
    j["grid"]["n_t"] = *g.n_t;
    // keep a one-day horizon unless dt is given too
    if (!g.dt) j["grid"]["dt"] = 24.0 / *g.n_t;
  }
  if (g.dt) j["grid"]["dt"] = *g.dt;
  if (g.round_trip) j["round_trip"] = *g.round_trip;
  if (g.c_r) j["prices"]["c_r"] = *g.c_r;
  if (!g.solver.empty()) j["solver"] = g.solver;
  return config_from_json(j);
}

// ---- output helpers ----

struct Output {
  fs::path dir;
  std::string config_hash;
  std::ostringstream summary;

  Output(const std::string& out, const RunConfig& cfg) : dir(out), config_hash(artifacts::hash(to_json(cfg))) {
    fs::create_directories(dir);
  }

  void json(const std::string& name, const std::string& format, const artifacts::Hashes& inputs,
            const Json& payload) {
    artifacts::write_json(dir / name, artifacts::wrap(format, config_hash, inputs, payload));
    summary << "wrote " << (dir / name).string() << '\n';
  }
  void text(const std::string& name, const std::string& body) {
    io::write_text(dir / name, body);
    summary << "wrote " << (dir / name).string() << '\n';
  }
  void finish(const std::string& command) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    std::string body = "command: " + command + "\ngenerated: " + stamp + "\nconfig_hash: " + config_hash + "\n" +
                       summary.str();
    io::write_text(dir / "summary.txt", body);
    std::cout << body;
  }
};

std::string fmt(double v) { return io::format_double(v); }

std::vector<std::string> step_header(int n_t) {
  std::vector<std::string> h;
  for (int k = 0; k < n_t; ++k) h.push_back("df_" + std::to_string(k));
  return h;
}

Eigen::MatrixXd read_frequency_matrix(const fs::path& path, const TimeGrid& grid) {
  const auto csv = io::read_csv_matrix(path);
  if (csv.values.cols() != grid.n_t) {
    throw GridMismatch(path.string() + ": " + std::to_string(csv.values.cols()) + " columns, grid has " +
                       std::to_string(grid.n_t) + " steps");
  }
  return csv.values;
}

CoOptSolution checked(const CoOptSolution& sol, const std::string& what) {
  if (!sol.feasible()) {
    throw SolverFailure(what + ": " + std::string(to_string(sol.status)), sol.solver_log);
  }
  return sol;
}

// ---- commands ----

void cmd_synth_frequency(const RunConfig& c, Output& out, int days) {
  const auto raw = synth_frequency_days(c.synthetic_frequency, days, c.require_seed());
  write_frequency_csv(out.dir / "frequency_raw.csv", raw);
  out.summary << "days: " << days << "\nwrote " << (out.dir / "frequency_raw.csv").string() << '\n';
}

void cmd_synth_profiles(const RunConfig& c, Output& out, int n) {
  ProfileParams p = c.profiles;
  p.n_t = c.grid.n_t;
  const auto set = synth_profiles(c.profile_kind, p, n, c.require_seed());
  out.text("profiles.csv", scenarios_csv_string(set));
  out.summary << "profiles: " << n << " (" << to_string(c.profile_kind) << ", " << p.n_t << " steps)\n";
}

void cmd_ingest(const RunConfig& c, Output& out, const fs::path& input) {
  const auto raw = read_frequency_csv(input);
  const auto res = ingest_days(raw, c.grid, c.battery, c.fold, c.clamp, c.max_gap_s);
  const int n = static_cast<int>(res.scenarios.rows());
  if (n == 0) throw ValidationError("no day survived cleaning");

  std::vector<int> train(n), validation;
  for (int i = 0; i < n; ++i) train[i] = i;
  if (c.train_fraction < 1.0) {
    const auto split = split_train_validation(n, c.train_fraction, c.require_seed());
    train = split.train;
    validation = split.validation;
  }
  const auto header = step_header(c.grid.n_t);
  out.text("train.csv", io::csv_matrix_string(select_rows(res.scenarios, train), header));
  if (!validation.empty()) {
    out.text("validation.csv", io::csv_matrix_string(select_rows(res.scenarios, validation), header));
  }

  Json manifest;
  manifest["fold"] = c.fold;
  manifest["clamp"] = c.clamp;
  manifest["max_gap_s"] = c.max_gap_s;
  manifest["grid"] = artifacts::to_json(c.grid);
  manifest["eta_c"] = c.battery.eta_c;
  manifest["eta_d"] = c.battery.eta_d;
  manifest["train_fraction"] = c.train_fraction;
  auto day_list = [&](const std::vector<int>& rows) {
    auto a = Json::array();
    for (int r : rows) a.push_back(res.days[static_cast<std::size_t>(r)]);
    return a;
  };
  manifest["train_days"] = day_list(train);
  manifest["validation_days"] = day_list(validation);
  auto rejected = Json::array();
  for (const auto& [day, why] : res.rejected) {
    rejected.push_back({{"day", day}, {"reason", why.reason}, {"first_bad_gap_s", why.first_bad_gap},
                        {"gap_samples", why.gap_samples}});
  }
  manifest["rejected"] = rejected;
  manifest["train_hash"] = io::sha256_file(out.dir / "train.csv");
  manifest["validation_hash"] = validation.empty() ? "" : io::sha256_file(out.dir / "validation.csv");
  out.json("ingest.json", "coopt.ingest", {{"frequency", io::sha256_file(input)}}, manifest);
  out.summary << "days: " << raw.size() << " read, " << n << " accepted, " << res.rejected.size()
              << " rejected; " << train.size() << " train / " << validation.size() << " validation\n";
}

void cmd_fit(const RunConfig& c, Output& out, const fs::path& train_path) {
  const Eigen::MatrixXd train = read_frequency_matrix(train_path, c.grid);
  const auto model = fit_uncertainty(train, c.epsilon);
  out.json("model.json", "coopt.model", {{"train", io::sha256_file(train_path)}}, artifacts::model_payload(model));
  out.summary << "training days: " << train.rows() << ", epsilon " << fmt(c.epsilon)
              << ", omega " << fmt(model.omega()) << '\n';
}

UncertaintyModel load_model(const fs::path& path, const RunConfig& c) {
  auto m = artifacts::model_from_json(artifacts::read_json(path));
  if (m.n_t() != c.grid.n_t) throw GridMismatch("model has " + std::to_string(m.n_t()) + " steps, grid has " +
                                                std::to_string(c.grid.n_t));
  return m;
}

struct OptimizeArgs {
  std::string kind;  // fcr | combined
  std::string model;
  std::string scenarios;
  std::string mode = "co";
  std::optional<double> fixed_r;
  bool cbf = false;
};

void cmd_optimize(const RunConfig& c, Output& out, const OptimizeArgs& a) {
  UncertaintyModel model = load_model(a.model, c);
  model.epsilon = c.epsilon;
  artifacts::Hashes inputs{{"model", io::sha256_file(a.model)}};
  CoOptProblem problem;
  if (a.kind == "fcr") {
    problem = build_fcr_problem(model, c.battery, c.grid, a.fixed_r, c.prices);
  } else {
    const auto set = read_scenarios_csv(a.scenarios);
    inputs["scenarios"] = io::sha256_file(a.scenarios);
    FcrMode mode = FcrMode::co_optimize;
    if (a.mode == "none") mode = FcrMode::none;
    if (a.mode == "fixed" || a.fixed_r) {
      if (!a.fixed_r) throw ValidationError("--mode fixed needs --fixed-r");
      mode = FcrMode::fixed;
    }
    problem = build_combined_problem(model, c.battery, c.grid, c.prices, set, mode, a.fixed_r.value_or(0.0));
  }
  if (a.cbf) out.text("problem.cbf", to_cbf(problem.program));
  auto solver = make_solver(c.solver);
  const auto sol = checked(solve(problem, *solver), "optimize " + a.kind);
  out.json("policy.json", "coopt.policy", inputs, artifacts::policy_payload(sol, c.battery, c.grid, c.prices));
  out.summary << "status: " << to_string(sol.status) << (sol.reduced_accuracy ? " (reduced accuracy)" : "")
              << "\nr: " << fmt(sol.r) << " kW\nfcr revenue: " << fmt(sol.fcr_revenue) << " EUR\n";
  if (a.kind == "combined") out.summary << "expected grid cost: " << fmt(sol.sc_cost) << " EUR\n";
  out.summary << "objective: " << fmt(sol.objective) << " EUR\niterations: " << sol.iterations << '\n';
}

void cmd_reduce(const RunConfig&, Output& out, const fs::path& input, int n) {
  const auto set = read_scenarios_csv(input);
  const auto red = reduce_backward_detail(set, n);
  out.text("scenarios.csv", scenarios_csv_string(red.reduced));
  Json payload;
  payload["n_in"] = set.size();
  payload["n_out"] = red.reduced.size();
  payload["distance"] = red.distance;
  payload["kept"] = red.kept;
  payload["assigned"] = red.assigned;
  out.json("reduction.json", "coopt.reduction", {{"scenarios", io::sha256_file(input)}}, payload);
  out.summary << "kept " << red.reduced.size() << " of " << set.size() << ", Kantorovich distance "
              << fmt(red.distance) << '\n';
}

void cmd_gap(const RunConfig& c, Output& out, const fs::path& model_path, const fs::path& policy_path,
             const std::string& mode) {
  UncertaintyModel model = load_model(model_path, c);
  model.epsilon = c.epsilon;
  const auto policy = artifacts::policy_from_json(artifacts::read_json(policy_path));
  if (policy.grid.n_t != c.grid.n_t) throw GridMismatch("policy grid does not match the configuration");
  GapSettings s;
  s.n_u = c.gap_n_u;
  s.n_l = c.gap_n_l;
  s.n_sc = c.gap_n_sc;
  s.alpha = c.gap_alpha;
  s.seed = c.require_seed();
  if (mode == "none") s.mode = FcrMode::none;
  if (mode == "fixed") {
    s.mode = FcrMode::fixed;
    s.fixed_r = policy.solution.r;
  }
  auto solver = make_solver(c.solver);
  const auto gap = estimate_gap(model, policy.cfg, policy.grid, policy.prices, policy.solution,
                                synthetic_source(c.profile_kind, c.profiles), s, *solver);
  Json payload = artifacts::parse_json(gap_json(gap), "gap report");
  out.json("gap.json", "coopt.gap",
           {{"model", io::sha256_file(model_path)}, {"policy", io::sha256_file(policy_path)}}, payload);
  out.summary << "upper mean " << fmt(gap.upper_mean) << " EUR, lower mean " << fmt(gap.lower_mean)
              << " EUR\ngap " << fmt(gap.gap) << " EUR (" << fmt(100.0 * gap.relative_gap()) << " %)\n";
}

struct SimulateArgs {
  std::string policy;
  std::string frequency;
  std::string profiles;
  std::string controller = "state";
  int trajectories = 0;
};

void cmd_simulate(const RunConfig& c, Output& out, const SimulateArgs& a) {
  const auto pol = artifacts::policy_from_json(artifacts::read_json(a.policy));
  const TimeGrid& grid = pol.grid;
  const Eigen::MatrixXd freq = read_frequency_matrix(a.frequency, grid);
  artifacts::Hashes inputs{{"policy", io::sha256_file(a.policy)}, {"frequency", io::sha256_file(a.frequency)}};

  Eigen::MatrixXd df = freq;
  if (c.n_resample > 0) {
    const auto whitening = fit_uncertainty(freq, c.epsilon);
    df = resample_frequency(freq, whitening, c.n_resample, c.require_seed());
  }

  const RechargePolicy policy = pol.solution.policy();
  Controller ctrl = a.controller == "disturbance" ? Controller::disturbance(policy, grid.dt)
                                                  : Controller::from_policy(policy, grid.dt);

  std::optional<ProfileScenarioSet> profiles;
  Eigen::MatrixXd per_sample;
  if (!a.profiles.empty()) {
    profiles = read_scenarios_csv(a.profiles);
    if (profiles->n_t() != grid.n_t) throw ScenarioLengthMismatch("profiles do not match the policy grid");
    inputs["profiles"] = io::sha256_file(a.profiles);
    // profile s % n_profiles runs next to frequency sample s
    per_sample.resize(df.rows(), grid.n_t);
    for (Eigen::Index s = 0; s < df.rows(); ++s) per_sample.row(s) = profiles->profiles.row(s % profiles->size());
  } else if (pol.has_sc) {
    throw ValidationError("the policy includes self-consumption; pass --profiles");
  }

  SimulationSettings settings;
  settings.alpha = c.sim_alpha;
  settings.quantiles = c.quantiles;
  const ScEnvelope* env = profiles ? &pol.solution.envelope : nullptr;
  const Eigen::MatrixXd* prof = profiles ? &per_sample : nullptr;
  const auto report = simulate(ctrl, pol.cfg, grid, df, settings, env, prof);

  Json payload = artifacts::parse_json(report_json(report), "simulation report");
  payload["controller"] = a.controller;
  payload["r"] = pol.solution.r;
  payload["resampled"] = c.n_resample > 0;
  if (profiles) {
    const auto rev = evaluate_revenue(pol.solution, *profiles, pol.cfg, grid, pol.prices, c.quantiles);
    payload["revenue"] = {{"fcr", rev.fcr},
                          {"sc_mean", rev.sc_mean},
                          {"total_mean", rev.total_mean},
                          {"baseline_cost", rev.baseline_cost},
                          {"cost_mean", rev.cost_mean},
                          {"quantile_levels", rev.quantile_levels},
                          {"sc_quantiles", rev.sc_quantiles}};
  }
  out.json("report.json", "coopt.simulation", inputs, payload);

  for (int s = 0; s < std::min<int>(a.trajectories, static_cast<int>(df.rows())); ++s) {
    ScInput sc;
    if (profiles) sc = ScInput{pol.solution.envelope, per_sample.row(s).transpose()};
    const auto run = run_closed_loop(ctrl, pol.cfg, grid, df.row(s).transpose(), profiles ? &sc : nullptr);
    out.text("trajectory_" + std::to_string(s) + ".csv", trajectory_csv(run));
  }
  out.summary << "samples: " << report.n_samples << ", with violation: " << report.any_violation
              << "\nmax violation probability: " << fmt(report.max_violation_prob_hat) << " (" << report.worst_row
              << "), upper bound " << fmt(report.upper_conf_bound) << " at confidence "
              << fmt(1.0 - report.alpha) << '\n';
}

struct StudyArgs {
  std::string kind;  // epsilon | crate | price
  std::string train;
  std::string scenarios;
};

void cmd_study(const RunConfig& c, Output& out, const StudyArgs& a) {
  const Eigen::MatrixXd train = read_frequency_matrix(a.train, c.grid);
  UncertaintyModel model = fit_uncertainty(train, c.epsilon);
  artifacts::Hashes inputs{{"train", io::sha256_file(a.train)}};
  auto solver = make_solver(c.solver);
  std::ostringstream csv;
  int failures = 0;
  auto status_of = [&](auto&& run) -> std::string {
    try {
      return run();
    } catch (const SolverFailure& e) {
      ++failures;
      return "solver_failure";
    }
  };

  if (a.kind == "epsilon") {
    csv << "epsilon,r,r_per_kwh,fcr_revenue,status\n";
    for (double eps : c.study_epsilon) {
      model.epsilon = eps;
      double r = 0.0, rev = 0.0;
      const std::string st = status_of([&] {
        const auto sol = checked(solve(build_fcr_problem(model, c.battery, c.grid, std::nullopt, c.prices), *solver),
                                 "epsilon study");
        r = sol.r;
        rev = sol.fcr_revenue;
        return std::string(to_string(sol.status));
      });
      csv << fmt(eps) << ',' << fmt(r) << ',' << fmt(r / c.battery.capacity()) << ',' << fmt(rev) << ',' << st
          << '\n';
    }
  } else if (a.kind == "crate") {
    csv << "c_rate,p_max,r,r_per_kwh,status\n";
    for (double rate : c.study_c_rate) {
      BatteryConfig b = c.battery;
      b.p_max = rate * b.capacity();
      b.p_min = -b.p_max;
      double r = 0.0;
      const std::string st = status_of([&] {
        const auto sol = checked(solve(build_fcr_problem(model, b, c.grid, std::nullopt, c.prices), *solver),
                                 "C-rate study");
        r = sol.r;
        return std::string(to_string(sol.status));
      });
      csv << fmt(rate) << ',' << fmt(b.p_max) << ',' << fmt(r) << ',' << fmt(r / b.capacity()) << ',' << st << '\n';
    }
  } else {
    if (a.scenarios.empty()) throw ValidationError("study price needs --scenarios");
    const auto set = read_scenarios_csv(a.scenarios);
    inputs["scenarios"] = io::sha256_file(a.scenarios);
    csv << "c_r,r,fcr_revenue,sc_revenue,total_revenue,objective,status\n";
    for (double c_r : c.study_c_r) {
      PriceSet prices = c.prices;
      prices.c_r = c_r;
      double r = 0.0, obj = 0.0;
      RevenueStats rev;
      const std::string st = status_of([&] {
        const auto sol = checked(
            solve(build_combined_problem(model, c.battery, c.grid, prices, set, FcrMode::co_optimize), *solver),
            "price study");
        r = sol.r;
        obj = sol.objective;
        rev = evaluate_revenue(sol, set, c.battery, c.grid, prices);
        return std::string(to_string(sol.status));
      });
      csv << fmt(c_r) << ',' << fmt(r) << ',' << fmt(rev.fcr) << ',' << fmt(rev.sc_mean) << ','
          << fmt(rev.total_mean) << ',' << fmt(obj) << ',' << st << '\n';
    }
  }
  out.text("study_" + a.kind + ".csv", csv.str());
  Json payload{{"study", a.kind}, {"csv_hash", io::sha256_hex(csv.str())}};
  out.json("study_" + a.kind + ".json", "coopt.study", inputs, payload);
  if (failures > 0) {
    throw SolverFailure(std::to_string(failures) + " study point(s) failed; see the status column", "");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Battery co-optimization for frequency control and self-consumption"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-c,--config", g.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--set", g.sets, "Override a configuration key, e.g. --set battery.e_max=12");
  app.add_option("--seed", g.seed, "Seed for stochastic commands");
  app.add_option("--epsilon", g.epsilon, "Violation probability target");
  app.add_option("--n-t", g.n_t, "Steps per day (dt = 24 / n_t unless --dt is given)");
  app.add_option("--dt", g.dt, "Step length in hours");
  app.add_option("--round-trip", g.round_trip, "Round-trip efficiency (split evenly)");
  app.add_option("--c-r", g.c_r, "Reserve price, EUR/MW/h");
  app.add_option("--solver", g.solver, "Conic solver (default: $COOPT_SOLVER or ipm)");
  app.add_option("-o,--out", g.out, "Output directory");

  auto* synth_f = app.add_subcommand("synth-frequency", "Synthetic 1 Hz frequency CSV");
  int days = 30;
  synth_f->add_option("--days", days, "Number of days")->check(CLI::PositiveNumber);

  auto* synth_p = app.add_subcommand("synth-profiles", "Synthetic profile scenarios CSV");
  int n_profiles = 100;
  std::string kind;
  synth_p->add_option("-n,--count", n_profiles, "Number of profiles")->check(CLI::PositiveNumber);
  synth_p->add_option("--kind", kind, "household, pv or net");

  auto* ingest = app.add_subcommand("ingest", "Clean, discretize and split raw frequency data");
  std::string input;
  std::optional<bool> fold;
  bool no_clamp = false;
  std::optional<double> train_fraction;
  ingest->add_option("-i,--input", input, "Frequency CSV (timestamp, frequency_hz)")->required();
  ingest->add_flag("--fold,!--no-fold", fold, "Fold the efficiencies into the deviations");
  ingest->add_flag("--no-clamp", no_clamp, "Do not saturate deviations at the maximum");
  ingest->add_option("--train-fraction", train_fraction, "Share of days used for training (1: no split)");

  auto* fit = app.add_subcommand("fit", "Fit the uncertainty set to training scenarios");
  std::string train;
  fit->add_option("--train", train, "Scenario matrix CSV")->required();

  auto* optimize = app.add_subcommand("optimize", "Solve for reserve, recharge policy and envelopes");
  OptimizeArgs oa;
  optimize->add_option("kind", oa.kind, "fcr or combined")->required()->check(CLI::IsMember({"fcr", "combined"}));
  optimize->add_option("--model", oa.model, "Model artifact")->required();
  optimize->add_option("--scenarios", oa.scenarios, "Profile scenarios CSV (combined)");
  optimize->add_option("--mode", oa.mode, "co, fixed or none (combined)")->check(CLI::IsMember({"co", "fixed", "none"}));
  optimize->add_option("--fixed-r", oa.fixed_r, "Pin the reserve (kW)");
  optimize->add_flag("--cbf", oa.cbf, "Also write the program in CBF format");

  auto* reduce = app.add_subcommand("reduce", "Backward scenario reduction");
  std::string red_in;
  int red_n = 0;
  reduce->add_option("--scenarios", red_in, "Profile scenarios CSV")->required();
  reduce->add_option("-n,--count", red_n, "Scenarios to keep")->required();

  auto* gap = app.add_subcommand("gap", "Statistical optimality gap of a combined policy");
  std::string gap_model, gap_policy, gap_mode = "co";
  std::optional<int> n_u, n_l, n_sc;
  std::optional<double> alpha;
  gap->add_option("--model", gap_model, "Model artifact")->required();
  gap->add_option("--policy", gap_policy, "Policy artifact (combined)")->required();
  gap->add_option("--mode", gap_mode, "co, fixed or none")->check(CLI::IsMember({"co", "fixed", "none"}));
  gap->add_option("--n-u", n_u, "Profiles for the upper bound");
  gap->add_option("--n-l", n_l, "SAA replications for the lower bound");
  gap->add_option("--n-sc", n_sc, "Profiles per SAA replication");
  gap->add_option("--alpha", alpha, "Confidence parameter");

  auto* simulate_cmd = app.add_subcommand("simulate", "Monte Carlo closed-loop check of a policy");
  SimulateArgs sa;
  std::optional<int> n_resample;
  std::vector<double> quantiles;
  simulate_cmd->add_option("--policy", sa.policy, "Policy artifact")->required();
  simulate_cmd->add_option("--frequency", sa.frequency, "Unfolded scenario matrix CSV")->required();
  simulate_cmd->add_option("--profiles", sa.profiles, "Profile scenarios CSV");
  simulate_cmd->add_option("--controller", sa.controller, "state or disturbance")
      ->check(CLI::IsMember({"state", "disturbance"}));
  simulate_cmd->add_option("--n-resample", n_resample, "Bootstrap samples (0: use the rows as given)");
  simulate_cmd->add_option("--quantiles", quantiles, "Quantile levels to report");
  simulate_cmd->add_option("--trajectories", sa.trajectories, "Dump the first k trajectories as CSV");

  auto* study = app.add_subcommand("study", "Parameter sweep");
  StudyArgs st;
  study->add_option("kind", st.kind, "epsilon, crate or price")->required()->check(
      CLI::IsMember({"epsilon", "crate", "price"}));
  study->add_option("--train", st.train, "Folded training scenario matrix CSV")->required();
  study->add_option("--scenarios", st.scenarios, "Profile scenarios CSV (price)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (ingest->parsed()) {
      if (fold) g.sets.push_back(std::string("ingest.fold=") + (*fold ? "true" : "false"));
      if (no_clamp) g.sets.push_back("ingest.clamp=false");
      if (train_fraction) g.sets.push_back("ingest.train_fraction=" + fmt(*train_fraction));
    }
    if (synth_p->parsed() && !kind.empty()) g.sets.push_back("profiles.kind=" + kind);
    if (gap->parsed()) {
      if (n_u) g.sets.push_back("gap.n_u=" + std::to_string(*n_u));
      if (n_l) g.sets.push_back("gap.n_l=" + std::to_string(*n_l));
      if (n_sc) g.sets.push_back("gap.n_sc=" + std::to_string(*n_sc));
      if (alpha) g.sets.push_back("gap.alpha=" + fmt(*alpha));
    }
    if (simulate_cmd->parsed()) {
      if (n_resample) g.sets.push_back("simulation.n_resample=" + std::to_string(*n_resample));
      if (!quantiles.empty()) g.sets.push_back("simulation.quantiles=" + Json(quantiles).dump());
    }
    const RunConfig cfg = load_config(g);
    Output out(g.out, cfg);
    std::string command;
    if (synth_f->parsed()) {
      command = "synth-frequency";
      cmd_synth_frequency(cfg, out, days);
    } else if (synth_p->parsed()) {
      command = "synth-profiles";
      cmd_synth_profiles(cfg, out, n_profiles);
    } else if (ingest->parsed()) {
      command = "ingest";
      cmd_ingest(cfg, out, input);
    } else if (fit->parsed()) {
      command = "fit";
      cmd_fit(cfg, out, train);
    } else if (optimize->parsed()) {
      command = "optimize " + oa.kind;
      cmd_optimize(cfg, out, oa);
    } else if (reduce->parsed()) {
      command = "reduce";
      cmd_reduce(cfg, out, red_in, red_n);
    } else if (gap->parsed()) {
      command = "gap";
      cmd_gap(cfg, out, gap_model, gap_policy, gap_mode);
    } else if (simulate_cmd->parsed()) {
      command = "simulate";
      cmd_simulate(cfg, out, sa);
    } else if (study->parsed()) {
      command = "study " + st.kind;
      cmd_study(cfg, out, st);
    }
    out.finish(command);
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const SolverFailure& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    if (!e.log().empty()) std::cerr << e.log() << '\n';
    return 3;
  }
}
