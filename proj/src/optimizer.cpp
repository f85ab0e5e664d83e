#include "coopt/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "coopt/errors.hpp"

namespace coopt {

namespace {

// A scalar that is either a decision variable or a fixed number.
struct ScalarRef {
  int var = -1;
  double value = 0.0;

  void add_to(LinExpr& e, double coef) const {
    if (var >= 0) {
      e.add(var, coef);
    } else {
      e += coef * value;
    }
  }
};

struct EnvelopeRefs {
  std::vector<ScalarRef> e_min, e_max, p_min, p_max;
};

EnvelopeRefs constant_envelope(const ScEnvelope& env) {
  EnvelopeRefs out;
  for (int k = 0; k < env.n_t(); ++k) {
    out.e_min.push_back({-1, env.e_min_sc(k)});
    out.e_max.push_back({-1, env.e_max_sc(k)});
    out.p_min.push_back({-1, env.p_min_sc(k)});
    out.p_max.push_back({-1, env.p_max_sc(k)});
  }
  return out;
}

void check_dims(const UncertaintyModel& model, const BatteryConfig& cfg, const TimeGrid& grid) {
  cfg.validate();
  grid.validate();
  if (model.n_t() != grid.n_t) throw ValidationError("uncertainty model and time grid disagree on n_t");
  if (model.w_inv.rows() != grid.n_t || model.sigma_f.size() != grid.n_t || model.sigma_b.size() != grid.n_t) {
    throw ValidationError("uncertainty model is incomplete");
  }
}

double revenue_per_kw(const PriceSet& prices, const TimeGrid& grid) { return prices.c_r / 1000.0 * grid.horizon(); }

// Robust rows in second-order-cone form. For a row a' df <= b with
// a' df = a' mean + c' f~, the constraint is
//   (b - a' mean, Omega u) in SOC,  u >= sigma_f .* c,  u >= -sigma_b .* c
// where c = L' a is kept in auxiliary variables built recursively.
void add_robust_rows(ProgramBuilder& pb, CoOptProblem& prob, const UncertaintyModel& model, const ScalarRef& r,
                     const EnvelopeRefs& env) {
  const int n = prob.grid.n_t;
  const double dt = prob.grid.dt;
  const auto& cfg = prob.cfg;
  const Eigen::MatrixXd& l = model.w_inv;
  const double omega = prob.omega;

  prob.d_var.assign(static_cast<std::size_t>(n) * n, -1);
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < k; ++i) prob.d_var[k * n + i] = pb.add_variable();
  }
  auto dv = [&](int k, int i) { return prob.d_var[k * n + i]; };

  // cp[k][j] = sum_{i=j}^{k-1} L(i,j) d(k,i), j < k
  std::vector<std::vector<int>> cp(n);
  for (int k = 0; k < n; ++k) {
    cp[k].resize(k);
    for (int j = 0; j < k; ++j) {
      const int v = pb.add_variable();
      cp[k][j] = v;
      LinExpr e;
      e.add(v, -1.0);
      for (int i = j; i < k; ++i) e.add(dv(k, i), l(i, j));
      pb.add_equality(e);
    }
  }
  // ce[k][j] = ce[k-1][j] + dt cp[k][j] + dt r L(k,j), j <= k
  std::vector<std::vector<int>> ce(n);
  for (int k = 0; k < n; ++k) {
    ce[k].resize(k + 1);
    for (int j = 0; j <= k; ++j) {
      const int v = pb.add_variable();
      ce[k][j] = v;
      LinExpr e;
      e.add(v, -1.0);
      if (j < k) {
        e.add(ce[k - 1][j], 1.0);
        e.add(cp[k][j], dt);
      }
      r.add_to(e, dt * l(k, j));
      pb.add_equality(e);
    }
  }
  // me[k] = me[k-1] + dt (sum_i d(k,i) mean_i + r mean_k)
  std::vector<int> me(n);
  for (int k = 0; k < n; ++k) {
    me[k] = pb.add_variable();
    LinExpr e;
    e.add(me[k], -1.0);
    if (k > 0) e.add(me[k - 1], 1.0);
    for (int i = 0; i < k; ++i) e.add(dv(k, i), dt * model.mean(i));
    r.add_to(e, dt * model.mean(k));
    pb.add_equality(e);
  }

  auto add_row = [&](const LinExpr& t, const std::vector<int>& c, double sign) {
    if (c.empty()) {
      pb.add_nonneg(t);
      return;
    }
    const int m = static_cast<int>(c.size());
    const int u0 = pb.add_variables(m);
    std::vector<LinExpr> cone{t};
    for (int j = 0; j < m; ++j) {
      pb.add_nonneg(LinExpr().add(u0 + j, 1.0).add(c[j], -sign * model.sigma_f(j)));
      pb.add_nonneg(LinExpr().add(u0 + j, 1.0).add(c[j], sign * model.sigma_b(j)));
      cone.push_back(LinExpr().add(u0 + j, omega));
    }
    pb.add_soc(cone);
  };

  auto mean_power = [&](LinExpr& e, int k, double coef) {
    for (int i = 0; i < k; ++i) e.add(dv(k, i), coef * model.mean(i));
  };

  for (int k = 0; k < n; ++k) {  // upper power
    LinExpr t(cfg.p_max);
    r.add_to(t, -1.0);
    env.p_max[k].add_to(t, -1.0);
    mean_power(t, k, -1.0);
    add_row(t, cp[k], 1.0);
  }
  for (int k = 0; k < n; ++k) {  // lower power
    LinExpr t(-cfg.p_min);
    r.add_to(t, -1.0);
    env.p_min[k].add_to(t, 1.0);
    mean_power(t, k, 1.0);
    add_row(t, cp[k], -1.0);
  }
  for (int k = 0; k < n; ++k) {  // upper energy
    LinExpr t(cfg.e_max);
    env.e_max[k].add_to(t, -1.0);
    t.add(me[k], -1.0);
    add_row(t, ce[k], 1.0);
  }
  for (int k = 0; k < n; ++k) {  // lower energy
    LinExpr t(-cfg.e_min);
    env.e_min[k].add_to(t, 1.0);
    t.add(me[k], 1.0);
    add_row(t, ce[k], -1.0);
  }
}

ScalarRef add_reserve(ProgramBuilder& pb, CoOptProblem& prob, std::optional<double> fixed) {
  if (fixed) {
    if (!std::isfinite(*fixed) || *fixed < 0.0) throw ValidationError("fixed reserve must be finite and >= 0");
    prob.r_var = -1;
    return {-1, *fixed};
  }
  prob.r_var = pb.add_variable();
  pb.add_lower_bound(prob.r_var, 0.0);
  return {prob.r_var, 0.0};
}

// Per-scenario dispatch: consumption, charge, discharge and energy, with the
// envelope either variable or fixed.
void add_sc_scenarios(ProgramBuilder& pb, CoOptProblem& prob, const EnvelopeRefs& env) {
  const int n = prob.grid.n_t;
  const double dt = prob.grid.dt;
  const auto& cfg = prob.cfg;
  const auto& prices = prob.prices;
  const auto& scenarios = prob.scenarios;
  for (int j = 0; j < scenarios.size(); ++j) {
    const double w = scenarios.weights(j);
    const int cons = pb.add_variables(n);
    const int pc = pb.add_variables(n);
    const int pd = pb.add_variables(n);
    const int e = pb.add_variables(n);
    prob.sc_cons.push_back(cons);
    prob.sc_charge.push_back(pc);
    prob.sc_discharge.push_back(pd);
    prob.sc_energy.push_back(e);
    for (int k = 0; k < n; ++k) {
      const double prof = scenarios.profiles(j, k);
      pb.add_lower_bound(cons + k, 0.0);
      pb.add_lower_bound(pc + k, 0.0);
      LinExpr pmax;
      env.p_max[k].add_to(pmax, 1.0);
      pb.add_nonneg(pmax.add(pc + k, -1.0));
      pb.add_upper_bound(pd + k, 0.0);
      LinExpr pmin;
      env.p_min[k].add_to(pmin, -1.0);
      pb.add_nonneg(pmin.add(pd + k, 1.0));
      LinExpr emin;
      env.e_min[k].add_to(emin, -1.0);
      pb.add_nonneg(emin.add(e + k, 1.0));
      LinExpr emax;
      env.e_max[k].add_to(emax, 1.0);
      pb.add_nonneg(emax.add(e + k, -1.0));
      // injection = prof + pc + pd - cons <= 0
      pb.add_nonneg(LinExpr(-prof).add(cons + k, 1.0).add(pc + k, -1.0).add(pd + k, -1.0));
      LinExpr dyn;
      dyn.add(e + k, 1.0);
      if (k > 0) {
        dyn.add(e + k - 1, -1.0);
      } else {
        dyn += -cfg.e_0;
      }
      dyn.add(pc + k, -dt * cfg.eta_c);
      dyn.add(pd + k, -dt / cfg.eta_d);
      pb.add_equality(dyn);

      pb.add_cost(cons + k, w * dt * (prices.c_cons - prices.c_inj));
      pb.add_cost(pc + k, w * dt * prices.c_inj);
      pb.add_cost(pd + k, w * dt * prices.c_inj);
      pb.add_cost_constant(w * dt * prices.c_inj * prof);
    }
  }
}

}  // namespace

std::string_view to_string(RowFamily family) {
  switch (family) {
    case RowFamily::upper_power:
      return "upper_power";
    case RowFamily::lower_power:
      return "lower_power";
    case RowFamily::upper_energy:
      return "upper_energy";
    case RowFamily::lower_energy:
      return "lower_energy";
  }
  return "unknown";
}

RobustSystem assemble_rows(const RechargePolicy& policy, const BatteryConfig& cfg, const TimeGrid& grid,
                           const ScEnvelope& envelope) {
  const int n = grid.n_t;
  if (policy.n_t() != n || envelope.n_t() != n) throw ValidationError("policy, envelope and grid disagree on n_t");
  RobustSystem sys;
  sys.a = Eigen::MatrixXd::Zero(4 * n, n);
  sys.b.resize(4 * n);
  Eigen::RowVectorXd cum = Eigen::RowVectorXd::Zero(n);
  for (int k = 0; k < n; ++k) {
    Eigen::RowVectorXd dk = policy.d.row(k);
    dk.segment(k, n - k).setZero();
    cum += grid.dt * dk;
    cum(k) += grid.dt * policy.r;
    sys.a.row(k) = dk;
    sys.a.row(n + k) = -dk;
    sys.a.row(2 * n + k) = cum;
    sys.a.row(3 * n + k) = -cum;
    sys.b(k) = cfg.p_max - policy.r - envelope.p_max_sc(k);
    sys.b(n + k) = envelope.p_min_sc(k) - cfg.p_min - policy.r;
    sys.b(2 * n + k) = cfg.e_max - envelope.e_max_sc(k);
    sys.b(3 * n + k) = envelope.e_min_sc(k) - cfg.e_min;
  }
  return sys;
}

EnergySeries fcr_energy(const RechargePolicy& policy, const Eigen::VectorXd& df, double dt) {
  const int n = policy.n_t();
  if (df.size() != n) throw ValidationError("frequency scenario length differs from policy");
  const PowerSeries p = recharge_disturbance(policy, df) + policy.r * df;
  EnergySeries e(n + 1);
  e(0) = 0.0;
  for (int k = 0; k < n; ++k) e(k + 1) = e(k) + dt * p(k);
  return e;
}

CoOptProblem build_fcr_problem(const UncertaintyModel& model, const BatteryConfig& cfg, const TimeGrid& grid,
                               std::optional<double> fix_r, const PriceSet& prices) {
  check_dims(model, cfg, grid);
  CoOptProblem prob;
  prob.cfg = cfg;
  prob.grid = grid;
  prob.prices = prices;
  prob.omega = model.omega();
  prob.mode = fix_r ? FcrMode::fixed : FcrMode::co_optimize;
  prob.fixed_r = fix_r.value_or(0.0);

  ProgramBuilder pb;
  const ScalarRef r = add_reserve(pb, prob, fix_r);
  if (!fix_r) {
    const double per_kw = revenue_per_kw(prices, grid);
    pb.add_cost(prob.r_var, per_kw > 0.0 ? -per_kw : -1.0);
  }
  add_robust_rows(pb, prob, model, r, constant_envelope(ScEnvelope::idle(cfg, grid.n_t)));
  prob.program = pb.build();
  return prob;
}

CoOptProblem build_combined_problem(const UncertaintyModel& model, const BatteryConfig& cfg, const TimeGrid& grid,
                                    const PriceSet& prices, const ProfileScenarioSet& scenarios, FcrMode mode,
                                    double fixed_r) {
  check_dims(model, cfg, grid);
  prices.validate();
  if (scenarios.size() == 0) throw ValidationError("at least one profile scenario is required");
  if (scenarios.n_t() != grid.n_t) throw ScenarioLengthMismatch("profile scenarios do not match the time grid");
  scenarios.validate();

  const int n = grid.n_t;
  CoOptProblem prob;
  prob.cfg = cfg;
  prob.grid = grid;
  prob.prices = prices;
  prob.mode = mode;
  prob.fixed_r = mode == FcrMode::fixed ? fixed_r : 0.0;
  prob.omega = model.omega();
  prob.has_sc = true;
  prob.scenarios = scenarios;

  ProgramBuilder pb;
  prob.env_e_min = pb.add_variables(n);
  prob.env_e_max = pb.add_variables(n);
  prob.env_p_min = pb.add_variables(n);
  prob.env_p_max = pb.add_variables(n);
  EnvelopeRefs env;
  for (int k = 0; k < n; ++k) {
    const int emin = prob.env_e_min + k, emax = prob.env_e_max + k;
    const int pmin = prob.env_p_min + k, pmax = prob.env_p_max + k;
    env.e_min.push_back({emin, 0.0});
    env.e_max.push_back({emax, 0.0});
    env.p_min.push_back({pmin, 0.0});
    env.p_max.push_back({pmax, 0.0});
    pb.add_lower_bound(emin, cfg.e_min);
    pb.add_nonneg(LinExpr().add(emax, 1.0).add(emin, -1.0));
    pb.add_upper_bound(emax, cfg.e_max);
    pb.add_lower_bound(pmin, cfg.p_min);
    pb.add_upper_bound(pmin, 0.0);
    pb.add_lower_bound(pmax, 0.0);
    pb.add_upper_bound(pmax, cfg.p_max);
  }

  if (mode == FcrMode::none) {
    prob.r_var = -1;
  } else {
    const ScalarRef r = add_reserve(pb, prob, mode == FcrMode::fixed ? std::optional<double>(fixed_r) : std::nullopt);
    if (r.var >= 0) pb.add_cost(r.var, -revenue_per_kw(prices, grid));
    add_robust_rows(pb, prob, model, r, env);
  }

  add_sc_scenarios(pb, prob, env);
  prob.program = pb.build();
  return prob;
}

CoOptSolution solve(const CoOptProblem& problem, ConicSolver& solver, const SolverSettings& settings) {
  const ConicSolution sol = solver.solve(problem.program, settings);
  CoOptSolution out;
  out.status = sol.status;
  out.reduced_accuracy = sol.reduced_accuracy;
  out.primal_residual = sol.primal_residual;
  out.dual_residual = sol.dual_residual;
  out.iterations = sol.iterations;
  out.solver_log = sol.log;
  if (sol.status == SolveStatus::primal_infeasible) return out;
  if (sol.status != SolveStatus::optimal) {
    throw SolverFailure("conic solver finished with status " + std::string(to_string(sol.status)), sol.log);
  }

  const auto& cfg = problem.cfg;
  const int n = problem.grid.n_t;
  const double dt = problem.grid.dt;
  const auto& x = sol.x;

  out.r = problem.r_var >= 0 ? std::max(0.0, x(problem.r_var)) : problem.fixed_r;
  out.d = Eigen::MatrixXd::Zero(n, n);
  if (!problem.d_var.empty()) {
    for (int k = 0; k < n; ++k) {
      for (int i = 0; i < k; ++i) out.d(k, i) = x(problem.d_var[k * n + i]);
    }
  }
  out.fcr_revenue = fcr_revenue(out.r, problem.prices, problem.grid);

  if (!problem.has_sc) {
    out.envelope = ScEnvelope::idle(cfg, n);
    out.objective = -out.fcr_revenue;
    return out;
  }

  if (problem.env_e_min >= 0) {
    ScEnvelope env;
    env.e_min_sc = x.segment(problem.env_e_min, n).cwiseMax(cfg.e_min).cwiseMin(cfg.e_max);
    env.e_max_sc = x.segment(problem.env_e_max, n).cwiseMax(env.e_min_sc).cwiseMin(cfg.e_max);
    env.p_min_sc = x.segment(problem.env_p_min, n).cwiseMax(cfg.p_min).cwiseMin(0.0);
    env.p_max_sc = x.segment(problem.env_p_max, n).cwiseMax(0.0).cwiseMin(cfg.p_max);
    out.envelope = env;
  } else {
    out.envelope = problem.fixed_envelope;
  }

  const int n_sc = problem.scenarios.size();
  const bool lossless = std::abs(cfg.eta_c * cfg.eta_d - 1.0) <= 1e-12;
  out.p_cons.resize(n_sc, n);
  out.p_inj.resize(n_sc, n);
  out.p_sc_c.resize(n_sc, n);
  out.p_sc_d.resize(n_sc, n);
  out.e_sc.resize(n_sc, n);
  out.scenario_cost = Eigen::VectorXd::Zero(n_sc);
  for (int j = 0; j < n_sc; ++j) {
    for (int k = 0; k < n; ++k) {
      double pc = std::max(0.0, x(problem.sc_charge[j] + k));
      double pd = std::min(0.0, x(problem.sc_discharge[j] + k));
      if (lossless) {
        // Netting leaves the energy unchanged when the battery has no losses.
        const double s = pc + pd;
        pc = std::max(s, 0.0);
        pd = std::min(s, 0.0);
      }
      // Consumption and injection follow from the balance; splitting the net
      // any other way only costs more since c_inj < c_cons.
      const double net = problem.scenarios.profiles(j, k) + pc + pd;
      out.p_sc_c(j, k) = pc;
      out.p_sc_d(j, k) = pd;
      out.p_cons(j, k) = std::max(net, 0.0);
      out.p_inj(j, k) = std::min(net, 0.0);
      out.e_sc(j, k) = x(problem.sc_energy[j] + k);
      out.scenario_cost(j) +=
          dt * (problem.prices.c_cons * out.p_cons(j, k) + problem.prices.c_inj * out.p_inj(j, k));
    }
  }
  out.sc_cost = problem.scenarios.weights.dot(out.scenario_cost);
  out.objective = out.sc_cost - out.fcr_revenue;
  return out;
}

CoOptSolution solve(const CoOptProblem& problem) {
  auto solver = make_solver();
  return solve(problem, *solver);
}

Eigen::VectorXd evaluate_recourse(const ScEnvelope& envelope, const BatteryConfig& cfg, const TimeGrid& grid,
                                  const PriceSet& prices, const Eigen::MatrixXd& profiles, ConicSolver& solver,
                                  int chunk) {
  cfg.validate();
  grid.validate();
  prices.validate();
  const int n = grid.n_t;
  if (envelope.n_t() != n) throw ValidationError("envelope does not match the time grid");
  if (profiles.rows() > 0 && profiles.cols() != n) {
    throw ScenarioLengthMismatch("profile scenarios do not match the time grid");
  }
  chunk = std::max(chunk, 1);
  const int total = static_cast<int>(profiles.rows());
  Eigen::VectorXd out(total);
  for (int start = 0; start < total; start += chunk) {
    const int m = std::min(chunk, total - start);
    CoOptProblem prob;
    prob.cfg = cfg;
    prob.grid = grid;
    prob.prices = prices;
    prob.mode = FcrMode::none;
    prob.has_sc = true;
    prob.fixed_envelope = envelope;
    prob.scenarios = ProfileScenarioSet::uniform(profiles.middleRows(start, m));
    ProgramBuilder pb;
    add_sc_scenarios(pb, prob, constant_envelope(envelope));
    prob.program = pb.build();
    const CoOptSolution sol = solve(prob, solver);
    if (!sol.feasible()) throw SolverFailure("recourse problem is infeasible for the given envelope", sol.solver_log);
    out.segment(start, m) = sol.scenario_cost;
  }
  return out;
}

VerificationReport verify_constraints(const CoOptSolution& solution, const UncertaintyModel& model,
                                      const Eigen::MatrixXd& validation, const BatteryConfig& cfg,
                                      const TimeGrid& grid) {
  const int n = grid.n_t;
  if (validation.rows() > 0 && validation.cols() != n) throw ValidationError("validation scenarios do not match grid");
  const ScEnvelope env = solution.envelope.n_t() == n ? solution.envelope : ScEnvelope::idle(cfg, n);
  const RobustSystem sys = assemble_rows(solution.policy(), cfg, grid, env);

  VerificationReport rep;
  rep.min_worst_margin = std::numeric_limits<double>::infinity();
  rep.min_empirical_margin = std::numeric_limits<double>::infinity();
  const Eigen::MatrixXd values = validation * sys.a.transpose();  // n_val x 4n
  for (int i = 0; i < 4 * n; ++i) {
    RowMargin m;
    m.row = i;
    m.family = static_cast<RowFamily>(i / n);
    m.step = i % n;
    m.b = sys.b(i);
    m.worst = worst_case(model, sys.a.row(i).transpose());
    m.empirical_max = validation.rows() > 0 ? values.col(i).maxCoeff() : -std::numeric_limits<double>::infinity();
    rep.min_worst_margin = std::min(rep.min_worst_margin, m.b - m.worst);
    rep.min_empirical_margin = std::min(rep.min_empirical_margin, m.b - m.empirical_max);
    if (m.empirical_max > m.worst + 1e-9) rep.empirical_within_worst = false;
    rep.rows.push_back(m);
  }
  return rep;
}

}  // namespace coopt
