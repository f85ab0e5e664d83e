#include "coopt/policies.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace coopt {

void RechargePolicy::validate() const {
  if (d.rows() != d.cols()) throw ValidationError("policy matrix must be square");
  if (!(r >= 0.0) || !std::isfinite(r)) throw ValidationError("reserve capacity must be finite and >= 0");
  for (Eigen::Index k = 0; k < d.rows(); ++k) {
    for (Eigen::Index i = k; i < d.cols(); ++i) {
      if (d(k, i) != 0.0) throw ValidationError("policy matrix must be strictly lower triangular");
    }
  }
}

RechargePolicy RechargePolicy::zero(int n_t) { return {Eigen::MatrixXd::Zero(n_t, n_t), 0.0}; }

void ScEnvelope::validate(const BatteryConfig& cfg, double tol) const {
  const Eigen::Index n = e_min_sc.size();
  if (e_max_sc.size() != n || p_min_sc.size() != n || p_max_sc.size() != n) {
    throw ValidationError("envelope series differ in length");
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    const bool ok = cfg.e_min <= e_min_sc[k] + tol && e_min_sc[k] <= e_max_sc[k] + tol &&
                    e_max_sc[k] <= cfg.e_max + tol && cfg.p_min <= p_min_sc[k] + tol && p_min_sc[k] <= tol &&
                    -tol <= p_max_sc[k] && p_max_sc[k] <= cfg.p_max + tol;
    if (!ok) throw ValidationError("envelope violates battery limits at step " + std::to_string(k));
  }
}

ScEnvelope ScEnvelope::idle(const BatteryConfig& cfg, int n_t) {
  ScEnvelope env;
  env.e_min_sc = Eigen::VectorXd::Constant(n_t, cfg.e_0);
  env.e_max_sc = Eigen::VectorXd::Constant(n_t, cfg.e_0);
  env.p_min_sc = Eigen::VectorXd::Zero(n_t);
  env.p_max_sc = Eigen::VectorXd::Zero(n_t);
  return env;
}

PowerSeries recharge_disturbance(const RechargePolicy& policy, const Eigen::VectorXd& df) {
  if (df.size() != policy.n_t()) throw ValidationError("frequency scenario length does not match the policy");
  return policy.d.triangularView<Eigen::StrictlyLower>() * df;
}

double StateFeedbackController::power(int step, const Eigen::VectorXd& de) const {
  double p = 0.0;
  for (int i = 0; i < step; ++i) p += k(step, i) * de[i];
  return p / dt;
}

StateFeedbackController to_state_feedback(const RechargePolicy& policy, double dt) {
  policy.validate();
  if (policy.r == 0.0) throw ZeroReserve("state feedback form is undefined for zero reserve");
  const Eigen::Index n = policy.d.rows();
  const Eigen::MatrixXd scaled = policy.d / policy.r;
  const Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(n, n) + scaled;
  StateFeedbackController c;
  c.k = lhs.triangularView<Eigen::UnitLower>().solve(scaled);
  c.k.triangularView<Eigen::Upper>().setZero();
  c.r = policy.r;
  c.dt = dt;
  return c;
}

double sc_rule_step(double p_prof, double e_sc, double e_min_sc, double e_max_sc, double p_min_sc,
                    double p_max_sc) {
  if (p_prof < 0.0 && e_sc < e_max_sc) return std::min(-p_prof, p_max_sc);
  if (p_prof > 0.0 && e_sc > e_min_sc) return std::max(-p_prof, p_min_sc);
  return 0.0;
}

namespace {

// Power that moves e to target in one step.
double landing_power(double e, double target, const BatteryConfig& cfg, double dt) {
  const double delta = target - e;
  return delta >= 0.0 ? delta / (cfg.eta_c * dt) : delta * cfg.eta_d / dt;
}

}  // namespace

ScStep sc_step(double p_prof, double e_sc, const ScEnvelope& env, int k, const BatteryConfig& cfg, double dt) {
  const double lo = env.e_min_sc[k];
  const double hi = env.e_max_sc[k];
  const double p_lo = env.p_min_sc[k];
  const double p_hi = env.p_max_sc[k];
  double p = sc_rule_step(p_prof, e_sc, lo, hi, p_lo, p_hi);
  double e_next = battery_step(e_sc, p, cfg, dt);
  if (e_next > hi || e_next < lo) {
    p = std::clamp(landing_power(e_sc, e_next > hi ? hi : lo, cfg, dt), p_lo, p_hi);
    e_next = battery_step(e_sc, p, cfg, dt);
    // Land exactly when the repair was not power limited.
    if (std::abs(e_next - hi) < 1e-12) e_next = hi;
    if (std::abs(e_next - lo) < 1e-12) e_next = lo;
  }
  return {p, e_next};
}

EnergySeries track_sc_energy(const PowerSeries& p_sc, const BatteryConfig& cfg, const TimeGrid& grid, double e0_sc) {
  if (p_sc.size() != grid.n_t) throw ValidationError("power series length does not match the grid");
  EnergySeries e(grid.n_t + 1);
  e[0] = e0_sc;
  for (int k = 0; k < grid.n_t; ++k) e[k + 1] = battery_step(e[k], p_sc[k], cfg, grid.dt);
  return e;
}

ScRun run_sc_rule(const PowerSeries& p_prof, const ScEnvelope& env, const BatteryConfig& cfg, const TimeGrid& grid,
                  double e0_sc) {
  if (p_prof.size() != grid.n_t || env.n_t() != grid.n_t) {
    throw ValidationError("profile or envelope length does not match the grid");
  }
  ScRun run;
  run.p_sc.resize(grid.n_t);
  run.e_sc.resize(grid.n_t + 1);
  run.e_sc[0] = e0_sc;
  for (int k = 0; k < grid.n_t; ++k) {
    const ScStep s = sc_step(p_prof[k], run.e_sc[k], env, k, cfg, grid.dt);
    run.p_sc[k] = s.p;
    run.e_sc[k + 1] = s.e_next;
  }
  return run;
}

}  // namespace coopt
