#pragma once

// Recharge policy for frequency control (disturbance and state feedback forms)
// and the rule-based self-consumption controller.

#include <Eigen/Core>

#include "coopt/errors.hpp"
#include "coopt/model.hpp"

namespace coopt {

class ZeroReserve : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// P_rc = D df with D strictly lower triangular, plus the reserve r (kW).
struct RechargePolicy {
  Eigen::MatrixXd d;
  double r = 0.0;

  int n_t() const { return static_cast<int>(d.rows()); }
  void validate() const;
  static RechargePolicy zero(int n_t);
};

/// Time-varying limits of the self-consumption share of the battery. Step k
/// bounds the power during step k and the virtual energy at the end of step k.
struct ScEnvelope {
  EnergySeries e_min_sc;
  EnergySeries e_max_sc;
  PowerSeries p_min_sc;
  PowerSeries p_max_sc;

  int n_t() const { return static_cast<int>(e_min_sc.size()); }
  void validate(const BatteryConfig& cfg, double tol = 1e-7) const;
  /// No self-consumption: energy pinned at e_0, zero power.
  static ScEnvelope idle(const BatteryConfig& cfg, int n_t);
};

PowerSeries recharge_disturbance(const RechargePolicy& policy, const Eigen::VectorXd& df);

/// P_rc,k = sum_{i<k} K[k][i] * dE_i / dt, dE_i the energy change during step i
/// attributable to frequency control.
struct StateFeedbackController {
  Eigen::MatrixXd k;
  double r = 0.0;
  double dt = 0.25;

  int n_t() const { return static_cast<int>(k.rows()); }
  /// Recharge power for step `step` given the energy increments of steps < step.
  double power(int step, const Eigen::VectorXd& de) const;
};

/// K = (I + D/r)^{-1} D/r. Throws ZeroReserve for r = 0.
StateFeedbackController to_state_feedback(const RechargePolicy& policy, double dt);

/// The rule on its own: charge from surplus while below the upper limit,
/// discharge into deficit while above the lower limit. Limits are blocking.
double sc_rule_step(double p_prof, double e_sc, double e_min_sc, double e_max_sc, double p_min_sc,
                    double p_max_sc);

struct ScStep {
  double p = 0.0;
  double e_next = 0.0;
};

/// Rule followed by a feasibility repair: if the step would end outside
/// [e_min_sc[k], e_max_sc[k]] the power is changed to land on the nearest
/// limit, within [p_min_sc[k], p_max_sc[k]].
ScStep sc_step(double p_prof, double e_sc, const ScEnvelope& env, int k, const BatteryConfig& cfg,
               double dt);

/// Integrates self-consumption power through the lossy update; n_t + 1 values.
EnergySeries track_sc_energy(const PowerSeries& p_sc, const BatteryConfig& cfg, const TimeGrid& grid,
                             double e0_sc);

struct ScRun {
  PowerSeries p_sc;
  EnergySeries e_sc;  // n_t + 1 values
};

ScRun run_sc_rule(const PowerSeries& p_prof, const ScEnvelope& env, const BatteryConfig& cfg,
                  const TimeGrid& grid, double e0_sc);

}  // namespace coopt
