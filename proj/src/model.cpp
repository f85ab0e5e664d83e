#include "coopt/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "coopt/errors.hpp"

namespace coopt {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

}  // namespace

void TimeGrid::validate() const {
  require(n_t >= 1, "time grid needs at least one step");
  require(std::isfinite(dt) && dt > 0.0, "time step must be positive");
}

TimeGrid TimeGrid::day(int steps) {
  TimeGrid g{steps, 24.0 / steps};
  g.validate();
  return g;
}

void BatteryConfig::validate() const {
  require(std::isfinite(e_min) && std::isfinite(e_max) && e_min < e_max,
          "battery needs e_min < e_max");
  require(p_min <= 0.0 && p_max >= 0.0, "battery needs p_min <= 0 <= p_max");
  require(e_min <= e_0 && e_0 <= e_max, "initial energy outside [e_min, e_max]");
  require(eta_c > 0.0 && eta_c <= 1.0, "charge efficiency must lie in (0, 1]");
  require(eta_d > 0.0 && eta_d <= 1.0, "discharge efficiency must lie in (0, 1]");
  const double c = c_rate();
  require(std::isfinite(c) && c > 0.0, "C-rate must be finite and positive");
}

BatteryConfig BatteryConfig::with_round_trip(double round_trip) const {
  require(round_trip > 0.0 && round_trip <= 1.0, "round-trip efficiency must lie in (0, 1]");
  BatteryConfig out = *this;
  out.eta_c = std::sqrt(round_trip);
  out.eta_d = out.eta_c;
  return out;
}

void PriceSet::validate() const {
  require(c_cons >= 0.0 && c_inj >= 0.0 && c_r >= 0.0, "prices must be nonnegative");
  require(c_inj < c_cons, "injection price must be below consumption price");
}

void ProfileScenarioSet::validate() const {
  require(weights.size() == profiles.rows(), "one weight per scenario required");
  require(profiles.allFinite(), "profiles must be finite");
  if (weights.size() == 0) return;
  require((weights.array() >= 0.0).all(), "weights must be nonnegative");
  require(std::abs(weights.sum() - 1.0) <= 1e-12 * std::max<double>(1.0, weights.size()), "weights must sum to 1");
}

ProfileScenarioSet ProfileScenarioSet::uniform(Eigen::MatrixXd profiles) {
  ProfileScenarioSet set;
  const auto n = profiles.rows();
  set.profiles = std::move(profiles);
  set.weights = n > 0 ? Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)) : Eigen::VectorXd();
  return set;
}

double battery_step(double e, double p, const BatteryConfig& cfg, double dt) {
  const double charge = std::max(p, 0.0);
  const double discharge = std::max(-p, 0.0);
  return e + (cfg.eta_c * charge - discharge / cfg.eta_d) * dt;
}

bool Trajectory::any_violation() const {
  auto set = [](std::uint8_t f) { return f != 0; };
  return std::any_of(energy_violation.begin(), energy_violation.end(), set) ||
         std::any_of(power_violation.begin(), power_violation.end(), set);
}

Trajectory simulate_trajectory(double e0, const PowerSeries& powers, const BatteryConfig& cfg,
                               const TimeGrid& grid) {
  require(powers.size() == grid.n_t, "power series length differs from grid");
  Trajectory out;
  out.energy.resize(grid.n_t + 1);
  out.energy_violation.assign(grid.n_t, 0);
  out.power_violation.assign(grid.n_t, 0);
  out.energy(0) = e0;
  for (int k = 0; k < grid.n_t; ++k) {
    const double p = powers(k);
    out.power_violation[k] = (p > cfg.p_max || p < cfg.p_min) ? 1 : 0;
    const double e = battery_step(out.energy(k), p, cfg, grid.dt);
    out.energy(k + 1) = e;
    out.energy_violation[k] = (e > cfg.e_max || e < cfg.e_min) ? 1 : 0;
  }
  return out;
}

double fcr_revenue(double r_kw, const PriceSet& prices, const TimeGrid& grid) {
  return prices.c_r * (r_kw / 1000.0) * grid.horizon();
}

double grid_cost(const PowerSeries& net, const PriceSet& prices, double dt) {
  double cost = 0.0;
  for (Eigen::Index k = 0; k < net.size(); ++k) {
    const double p = net(k);
    cost += (p > 0.0 ? prices.c_cons * p : prices.c_inj * p) * dt;
  }
  return cost;
}

}  // namespace coopt
