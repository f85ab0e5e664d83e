#pragma once

// Shared domain types and the discrete lossy battery model.
//
// Sign convention: positive power charges the battery (consumption from the
// grid), negative power discharges it.

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace coopt {

using PowerSeries = Eigen::VectorXd;   // kW, one value per step
using EnergySeries = Eigen::VectorXd;  // kWh

struct TimeGrid {
  int n_t = 96;
  double dt = 0.25;  // hours per step

  double horizon() const { return n_t * dt; }
  void validate() const;

  static TimeGrid day(int steps);
};

struct BatteryConfig {
  double e_min = 0.0;   // kWh
  double e_max = 10.0;  // kWh
  double p_min = -7.0;  // kW
  double p_max = 7.0;   // kW
  double eta_c = 0.9486832980505138;
  double eta_d = 0.9486832980505138;
  double e_0 = 5.0;  // kWh

  double capacity() const { return e_max - e_min; }
  double c_rate() const { return p_max / (e_max - e_min); }
  void validate() const;

  // Same battery with charge and discharge efficiency sqrt(round_trip).
  BatteryConfig with_round_trip(double round_trip) const;
};

struct PriceSet {
  double c_cons = 0.2873;  // EUR/kWh
  double c_inj = 0.1220;   // EUR/kWh
  double c_r = 14.71;      // EUR/MW/h

  void validate() const;
};

/// Net household power scenarios (demand minus production, kW), one row per
/// scenario, with probabilities.
struct ProfileScenarioSet {
  Eigen::MatrixXd profiles;  // n_sc x n_t
  Eigen::VectorXd weights;   // sums to 1

  int size() const { return static_cast<int>(profiles.rows()); }
  int n_t() const { return static_cast<int>(profiles.cols()); }
  void validate() const;
  static ProfileScenarioSet uniform(Eigen::MatrixXd profiles);
};

/// One application of the lossy update. Does not clamp.
double battery_step(double e, double p, const BatteryConfig& cfg, double dt);

struct Trajectory {
  EnergySeries energy;                 // n_t + 1 values, energy(0) = e0
  std::vector<std::uint8_t> energy_violation;  // per step, energy(k+1) outside bounds
  std::vector<std::uint8_t> power_violation;   // per step, power(k) outside bounds

  bool any_violation() const;
};

Trajectory simulate_trajectory(double e0, const PowerSeries& powers,
                               const BatteryConfig& cfg, const TimeGrid& grid);

/// Revenue of a reserve capacity (kW) held over the grid horizon, EUR.
double fcr_revenue(double r_kw, const PriceSet& prices, const TimeGrid& grid);

/// Grid cost (EUR) of a net power series priced at consumption/injection rates.
double grid_cost(const PowerSeries& net, const PriceSet& prices, double dt);

}  // namespace coopt
