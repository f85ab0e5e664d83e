#pragma once

// Robust reserve/recharge optimization, optionally combined with a sample
// average approximation of self-consumption.
//
// Robust rows, n_t each, in this order:
//   upper power   P_rc,k          <= P_max - r - P_max,k^sc
//   lower power  -P_rc,k          <= P_min,k^sc - P_min - r
//   upper energy  E^r_k           <= E_max - E_max,k^sc
//   lower energy -E^r_k           <= E_min,k^sc - E_min
// where P_rc = D df and E^r = G (D + r I) df is the energy moved by frequency
// control (G lower triangular with entries dt). Without self-consumption the
// envelope is pinned at E^sc = e_0, P^sc = 0.

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "coopt/conic.hpp"
#include "coopt/model.hpp"
#include "coopt/policies.hpp"
#include "coopt/uncertainty.hpp"

namespace coopt {

enum class FcrMode { none, co_optimize, fixed };

enum class RowFamily { upper_power, lower_power, upper_energy, lower_energy };
std::string_view to_string(RowFamily family);

/// Numeric robust rows at a fixed policy and envelope: a_i' df <= b_i.
struct RobustSystem {
  Eigen::MatrixXd a;  // 4 n_t x n_t
  Eigen::VectorXd b;  // 4 n_t
};

RobustSystem assemble_rows(const RechargePolicy& policy, const BatteryConfig& cfg, const TimeGrid& grid,
                           const ScEnvelope& envelope);

/// Energy moved by frequency control (n_t + 1 values starting at 0) on an
/// ideal battery: cumulative dt * (D df + r df).
EnergySeries fcr_energy(const RechargePolicy& policy, const Eigen::VectorXd& df, double dt);

struct CoOptProblem {
  ConicProgram program;
  BatteryConfig cfg;
  TimeGrid grid;
  PriceSet prices;
  FcrMode mode = FcrMode::co_optimize;
  double fixed_r = 0.0;
  double omega = 0.0;

  int r_var = -1;
  std::vector<int> d_var;  // n_t * n_t row-major, -1 for structural zeros

  bool has_sc = false;
  int env_e_min = -1, env_e_max = -1, env_p_min = -1, env_p_max = -1;  // first index of n_t block
  ScEnvelope fixed_envelope;  // used when the envelope is not a decision variable
  ProfileScenarioSet scenarios;
  std::vector<int> sc_cons, sc_charge, sc_discharge, sc_energy;  // per scenario, first index of n_t block
};

/// Reserve-only problem (no self-consumption). Maximizes FCR revenue, or
/// checks feasibility of a given reserve when fix_r is set.
CoOptProblem build_fcr_problem(const UncertaintyModel& model, const BatteryConfig& cfg, const TimeGrid& grid,
                               std::optional<double> fix_r = std::nullopt, const PriceSet& prices = {});

/// Full program: expected grid cost over the scenarios minus FCR revenue, with
/// envelopes shared across scenarios. mode = none drops the reserve entirely
/// (self-consumption only); fixed pins r to fixed_r.
CoOptProblem build_combined_problem(const UncertaintyModel& model, const BatteryConfig& cfg, const TimeGrid& grid,
                                    const PriceSet& prices, const ProfileScenarioSet& scenarios,
                                    FcrMode mode = FcrMode::co_optimize, double fixed_r = 0.0);

class ScenarioLengthMismatch : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct CoOptSolution {
  SolveStatus status = SolveStatus::numerical_trouble;
  bool reduced_accuracy = false;
  double r = 0.0;
  Eigen::MatrixXd d;
  ScEnvelope envelope;
  // n_sc x n_t dispatch per scenario (empty without self-consumption)
  Eigen::MatrixXd p_cons, p_inj, p_sc_c, p_sc_d, e_sc;
  double objective = 0.0;     // EUR over the horizon
  double sc_cost = 0.0;       // expected grid cost, EUR
  Eigen::VectorXd scenario_cost;  // grid cost per scenario, EUR
  double fcr_revenue = 0.0;   // EUR
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
  std::string solver_log;

  RechargePolicy policy() const { return {d, r}; }
  bool feasible() const { return status == SolveStatus::optimal; }
};

/// Solves and extracts the solution. Infeasible programs are reported through
/// the status; other solver outcomes throw SolverFailure with the solver log.
CoOptSolution solve(const CoOptProblem& problem, ConicSolver& solver, const SolverSettings& settings = {});
CoOptSolution solve(const CoOptProblem& problem);

/// Grid cost (EUR) of each profile when the battery is dispatched optimally
/// inside a fixed envelope, with perfect foresight of that profile. Profiles
/// are solved in independent batches of `chunk`.
Eigen::VectorXd evaluate_recourse(const ScEnvelope& envelope, const BatteryConfig& cfg, const TimeGrid& grid,
                                  const PriceSet& prices, const Eigen::MatrixXd& profiles, ConicSolver& solver,
                                  int chunk = 50);

struct RowMargin {
  int row = 0;
  RowFamily family = RowFamily::upper_power;
  int step = 0;
  double b = 0.0;
  double worst = 0.0;          // max over the uncertainty set of a' df
  double empirical_max = 0.0;  // max over the validation scenarios
};

struct VerificationReport {
  std::vector<RowMargin> rows;
  double min_worst_margin = 0.0;      // min_i b_i - worst_i
  double min_empirical_margin = 0.0;  // min_i b_i - empirical_max_i
  bool empirical_within_worst = true;
};

VerificationReport verify_constraints(const CoOptSolution& solution, const UncertaintyModel& model,
                                      const Eigen::MatrixXd& validation, const BatteryConfig& cfg,
                                      const TimeGrid& grid);

}  // namespace coopt
