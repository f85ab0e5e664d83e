#pragma once

// Monte Carlo checks of a recharge controller on the lossy battery: bootstrap
// frequency scenarios, closed-loop runs with reserve activation and optional
// self-consumption, violation frequencies with confidence bounds, revenues.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "coopt/kernels.hpp"
#include "coopt/model.hpp"
#include "coopt/optimizer.hpp"
#include "coopt/policies.hpp"
#include "coopt/uncertainty.hpp"

namespace coopt {

/// New step-averaged frequency scenarios (rows). Training rows are whitened
/// with the model, each whitened coordinate is drawn independently with
/// replacement from its n_train values, and the result is mapped back. Row s
/// depends only on (seed, s).
Eigen::MatrixXd resample_frequency(const Eigen::MatrixXd& train, const UncertaintyModel& model, int n_r,
                                   std::uint64_t seed);

/// Recharge controller in either form. Both give the same powers on an
/// ideal battery; on a lossy one only the state feedback sees the losses.
struct Controller {
  enum class Kind { state_feedback, disturbance_feedback };
  Kind kind = Kind::state_feedback;
  Eigen::MatrixXd gain;  // K for state feedback, D for disturbance feedback
  double r = 0.0;
  double dt = 0.25;

  int n_t() const { return static_cast<int>(gain.rows()); }
  static Controller state(const StateFeedbackController& sf);
  static Controller disturbance(const RechargePolicy& policy, double dt);
  /// State feedback when r > 0, disturbance feedback (D = 0 in practice) otherwise.
  static Controller from_policy(const RechargePolicy& policy, double dt);
};

/// Self-consumption running next to frequency control.
struct ScInput {
  ScEnvelope envelope;
  PowerSeries profile;  // kW, demand minus production
};

struct ClosedLoopRun {
  EnergySeries energy;  // n_t + 1 values of the physical battery
  EnergySeries e_sc;    // n_t + 1 values of the self-consumption share (e_0 when idle)
  PowerSeries p_rc, p_reserve, p_sc;
  // per step: reserve headroom missing (P_rc + r + P_max,k^sc > P_max, and the
  // mirror below) and energy at the end of the step out of bounds
  std::vector<std::uint8_t> upper_power, lower_power, upper_energy, lower_energy;
  int clamped_steps = 0;

  bool any_violation() const;
};

/// Step k: P = P_rc,k + r df_k (+ P_sc,k from the rule) through the lossy
/// update. The state feedback reads the energy change of each past step minus
/// the self-consumption share. After a violation is flagged the energy is
/// clamped to [E_min, E_max] so it does not carry over.
ClosedLoopRun run_closed_loop(const Controller& ctrl, const BatteryConfig& cfg, const TimeGrid& grid,
                              const Eigen::VectorXd& df, const ScInput* sc = nullptr);

/// One-sided upper confidence bound on a binomial probability at level
/// 1 - alpha: normal approximation from 5 observed events on, exact
/// Clopper-Pearson below. Capped at 1.
double violation_bound(long counts, long n_samples, double alpha);

struct SimulationSettings {
  double alpha = 0.01;
  std::vector<double> quantiles{0.01, 0.5, 0.99};
};

struct SimulationReport {
  int n_samples = 0;
  int n_t = 0;
  double alpha = 0.01;
  // violations per step and row family
  std::vector<long> upper_power, lower_power, upper_energy, lower_energy;
  long any_violation = 0;   // samples with at least one violation
  long clamped_samples = 0;
  double max_violation_prob_hat = 0.0;
  double upper_conf_bound = 0.0;
  std::string worst_row;  // "family@step"
  std::vector<double> quantile_levels;
  Eigen::MatrixXd energy_quantiles;  // levels x (n_t + 1)
  Eigen::MatrixXd power_quantiles;   // levels x n_t, total battery power
  std::string kernel;                // kernel table used
};

/// Runs every row of df (n x n_t) through the closed loop, the samples held
/// side by side so the inner loops go through the vector kernels. With sc,
/// profiles has one row per sample. table defaults to the active kernels.
SimulationReport simulate(const Controller& ctrl, const BatteryConfig& cfg, const TimeGrid& grid,
                          const Eigen::MatrixXd& df, const SimulationSettings& settings = {},
                          const ScEnvelope* envelope = nullptr, const Eigen::MatrixXd* profiles = nullptr,
                          const kernels::KernelTable* table = nullptr);

std::string report_json(const SimulationReport& report);

/// CSV with columns step, energy, p_rc, p_reserve, p_sc (energy at the start of the step).
std::string trajectory_csv(const ClosedLoopRun& run);

struct RevenueStats {
  double fcr = 0.0;            // EUR, c_r r / 1000 * horizon
  double sc_mean = 0.0;        // EUR, expected saving on the grid bill
  double total_mean = 0.0;     // sc_mean + fcr
  double baseline_cost = 0.0;  // expected bill without battery
  double cost_mean = 0.0;      // expected bill with the rule
  std::vector<double> quantile_levels;
  std::vector<double> sc_quantiles;
};

/// Self-consumption rule inside the solution's envelope on each profile, bill
/// at c_cons / c_inj, plus the reserve payment.
RevenueStats evaluate_revenue(const CoOptSolution& solution, const ProfileScenarioSet& profiles,
                              const BatteryConfig& cfg, const TimeGrid& grid, const PriceSet& prices,
                              const std::vector<double>& quantiles = {0.05, 0.5, 0.95});

/// Type 7 sample quantile (linear interpolation between order statistics).
double sample_quantile(std::vector<double> values, double q);

}  // namespace coopt
