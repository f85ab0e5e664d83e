#include "coopt/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/beta.hpp>

#include "json.hpp"

#include "coopt/errors.hpp"
#include "coopt/frequency.hpp"
#include "coopt/io.hpp"
#include "coopt/rng.hpp"

namespace coopt {

namespace {

constexpr double kTol = 1e-9;

}  // namespace

Eigen::MatrixXd resample_frequency(const Eigen::MatrixXd& train, const UncertaintyModel& model, int n_r,
                                   std::uint64_t seed) {
  const int n_t = model.n_t();
  if (n_r < 0) throw ValidationError("number of resamples must be nonnegative");
  if (train.rows() < 1) throw EmptySample("resampling needs at least one training day");
  if (train.cols() != n_t) throw ValidationError("training scenarios do not match the model");
  // whitened pool, one row per training day
  const Eigen::MatrixXd pool = (train.rowwise() - model.mean.transpose()) * model.w.transpose();
  const auto n_train = static_cast<std::uint64_t>(pool.rows());
  Eigen::MatrixXd out(n_r, n_t);
  Eigen::VectorXd f(n_t);
  for (int s = 0; s < n_r; ++s) {
    Rng rng(seed, static_cast<std::uint64_t>(s));
    for (int k = 0; k < n_t; ++k) f(k) = pool(static_cast<Eigen::Index>(rng.below(n_train)), k);
    out.row(s) = (model.mean + model.w_inv.triangularView<Eigen::Lower>() * f).transpose();
  }
  return out;
}

Controller Controller::state(const StateFeedbackController& sf) {
  Controller c;
  c.kind = Kind::state_feedback;
  c.gain = sf.k;
  c.r = sf.r;
  c.dt = sf.dt;
  return c;
}

Controller Controller::disturbance(const RechargePolicy& policy, double dt) {
  policy.validate();
  Controller c;
  c.kind = Kind::disturbance_feedback;
  c.gain = policy.d.triangularView<Eigen::StrictlyLower>();
  c.r = policy.r;
  c.dt = dt;
  return c;
}

Controller Controller::from_policy(const RechargePolicy& policy, double dt) {
  if (policy.r > 0.0) return state(to_state_feedback(policy, dt));
  return disturbance(policy, dt);
}

bool ClosedLoopRun::any_violation() const {
  auto any = [](const std::vector<std::uint8_t>& v) { return std::any_of(v.begin(), v.end(), [](auto x) { return x != 0; }); };
  return any(upper_power) || any(lower_power) || any(upper_energy) || any(lower_energy);
}

namespace {

void check_inputs(const Controller& ctrl, const TimeGrid& grid, Eigen::Index df_len) {
  grid.validate();
  if (ctrl.n_t() != grid.n_t || ctrl.gain.cols() != grid.n_t) throw ValidationError("controller does not match the grid");
  if (df_len != grid.n_t) throw GridMismatch("frequency scenario length does not match the grid");
  if (std::abs(ctrl.dt - grid.dt) > 1e-12) throw ValidationError("controller and grid use different step lengths");
}

}  // namespace

ClosedLoopRun run_closed_loop(const Controller& ctrl, const BatteryConfig& cfg, const TimeGrid& grid,
                              const Eigen::VectorXd& df, const ScInput* sc) {
  cfg.validate();
  check_inputs(ctrl, grid, df.size());
  const int n = grid.n_t;
  const double dt = grid.dt;
  if (sc && (sc->envelope.n_t() != n || sc->profile.size() != n)) {
    throw ScenarioLengthMismatch("self-consumption inputs do not match the grid");
  }

  ClosedLoopRun run;
  run.energy.resize(n + 1);
  run.e_sc.resize(n + 1);
  run.p_rc.resize(n);
  run.p_reserve.resize(n);
  run.p_sc.resize(n);
  run.upper_power.assign(n, 0);
  run.lower_power.assign(n, 0);
  run.upper_energy.assign(n, 0);
  run.lower_energy.assign(n, 0);
  run.energy(0) = cfg.e_0;
  run.e_sc(0) = cfg.e_0;
  Eigen::VectorXd de = Eigen::VectorXd::Zero(n);

  for (int k = 0; k < n; ++k) {
    const Eigen::VectorXd& source = ctrl.kind == Controller::Kind::state_feedback ? de : df;
    double acc = 0.0;
    for (int i = 0; i < k; ++i) acc += ctrl.gain(k, i) * source(i);
    const double p_rc = ctrl.kind == Controller::Kind::state_feedback ? acc / dt : acc;
    const double p_res = ctrl.r * df(k);
    double p_sc = 0.0;
    double e_sc_next = run.e_sc(k);
    double head_up = 0.0, head_down = 0.0;
    if (sc) {
      const ScStep step = sc_step(sc->profile(k), run.e_sc(k), sc->envelope, k, cfg, dt);
      p_sc = step.p;
      e_sc_next = step.e_next;
      head_up = sc->envelope.p_max_sc(k);
      head_down = sc->envelope.p_min_sc(k);
    }
    run.upper_power[k] = p_rc + ctrl.r + head_up > cfg.p_max + kTol;
    run.lower_power[k] = p_rc - ctrl.r + head_down < cfg.p_min - kTol;

    const double p = p_rc + p_res + p_sc;
    const double e = run.energy(k);
    double e_next = battery_step(e, p, cfg, dt);
    de(k) = (e_next - e) - (e_sc_next - run.e_sc(k));
    run.upper_energy[k] = e_next > cfg.e_max + kTol;
    run.lower_energy[k] = e_next < cfg.e_min - kTol;
    if (run.upper_energy[k] || run.lower_energy[k]) {
      e_next = std::clamp(e_next, cfg.e_min, cfg.e_max);
      ++run.clamped_steps;
    }
    run.energy(k + 1) = e_next;
    run.e_sc(k + 1) = e_sc_next;
    run.p_rc(k) = p_rc;
    run.p_reserve(k) = p_res;
    run.p_sc(k) = p_sc;
  }
  return run;
}

double violation_bound(long counts, long n_samples, double alpha) {
  if (n_samples <= 0) throw EmptySample("no samples");
  if (counts < 0 || counts > n_samples) throw ValidationError("violation count out of range");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must be in (0, 1)");
  if (counts == n_samples) return 1.0;
  const double n = static_cast<double>(n_samples);
  if (counts >= 5) {
    const double p = static_cast<double>(counts) / n;
    const double z = boost::math::quantile(boost::math::complement(boost::math::normal_distribution<>(), alpha));
    return std::min(1.0, p + z * std::sqrt(p * (1.0 - p) / n));
  }
  // Upper end of the one-sided exact interval: the (1 - alpha) quantile of
  // Beta(counts + 1, n - counts).
  return boost::math::ibeta_inv(static_cast<double>(counts) + 1.0, n - static_cast<double>(counts), 1.0 - alpha);
}

double sample_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw EmptySample("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("quantile level must be in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

SimulationReport simulate(const Controller& ctrl, const BatteryConfig& cfg, const TimeGrid& grid,
                          const Eigen::MatrixXd& df, const SimulationSettings& settings, const ScEnvelope* envelope,
                          const Eigen::MatrixXd* profiles, const kernels::KernelTable* table) {
  cfg.validate();
  check_inputs(ctrl, grid, df.cols());
  const int n_t = grid.n_t;
  const int m = static_cast<int>(df.rows());
  if (m < 1) throw EmptySample("no frequency scenarios to simulate");
  if ((envelope == nullptr) != (profiles == nullptr)) {
    throw ValidationError("self-consumption needs both an envelope and profiles");
  }
  const bool with_sc = envelope != nullptr;
  if (with_sc && (envelope->n_t() != n_t || profiles->cols() != n_t || profiles->rows() != m)) {
    throw ScenarioLengthMismatch("self-consumption inputs do not match the samples");
  }
  const kernels::KernelTable& kt = table ? *table : kernels::active();
  const double dt = grid.dt;
  const auto len = static_cast<std::size_t>(m);
  const bool state = ctrl.kind == Controller::Kind::state_feedback;

  SimulationReport rep;
  rep.n_samples = m;
  rep.n_t = n_t;
  rep.alpha = settings.alpha;
  rep.kernel = std::string(kt.name);
  rep.upper_power.assign(n_t, 0);
  rep.lower_power.assign(n_t, 0);
  rep.upper_energy.assign(n_t, 0);
  rep.lower_energy.assign(n_t, 0);

  // Samples side by side: column k holds step k of every sample.
  const Eigen::MatrixXd& f = df;
  Eigen::MatrixXd de = Eigen::MatrixXd::Zero(m, n_t);
  Eigen::MatrixXd energy(m, n_t + 1);
  Eigen::MatrixXd power(m, n_t);
  energy.col(0).setConstant(cfg.e_0);
  Eigen::VectorXd e_sc = Eigen::VectorXd::Constant(m, cfg.e_0);
  Eigen::VectorXd e_sc_next(m), p_rc(m), p_sc = Eigen::VectorXd::Zero(m), e_next(m);
  std::vector<char> violated(len, 0), clamped(len, 0);

  for (int k = 0; k < n_t; ++k) {
    p_rc.setZero();
    const Eigen::MatrixXd& source = state ? de : f;
    for (int i = 0; i < k; ++i) {
      const double g = ctrl.gain(k, i);
      kt.axpy(g, source.col(i).data(), p_rc.data(), len);
    }
    if (state) p_rc /= dt;

    double head_up = 0.0, head_down = 0.0;
    if (with_sc) {
      for (int s = 0; s < m; ++s) {
        const ScStep step = sc_step((*profiles)(s, k), e_sc(s), *envelope, k, cfg, dt);
        p_sc(s) = step.p;
        e_sc_next(s) = step.e_next;
      }
      head_up = envelope->p_max_sc(k);
      head_down = envelope->p_min_sc(k);
    } else {
      e_sc_next = e_sc;
    }

    for (int s = 0; s < m; ++s) power(s, k) = p_rc(s) + ctrl.r * f(s, k) + p_sc(s);
    e_next = energy.col(k);
    kt.battery_step(e_next.data(), power.col(k).data(), len, cfg.eta_c, cfg.eta_d, dt);

    for (int s = 0; s < m; ++s) {
      const double e = energy(s, k);
      de(s, k) = (e_next(s) - e) - (e_sc_next(s) - e_sc(s));
      const bool up_p = p_rc(s) + ctrl.r + head_up > cfg.p_max + kTol;
      const bool lo_p = p_rc(s) - ctrl.r + head_down < cfg.p_min - kTol;
      const bool up_e = e_next(s) > cfg.e_max + kTol;
      const bool lo_e = e_next(s) < cfg.e_min - kTol;
      rep.upper_power[k] += up_p;
      rep.lower_power[k] += lo_p;
      rep.upper_energy[k] += up_e;
      rep.lower_energy[k] += lo_e;
      if (up_p || lo_p || up_e || lo_e) violated[s] = 1;
      if (up_e || lo_e) {
        e_next(s) = std::clamp(e_next(s), cfg.e_min, cfg.e_max);
        clamped[s] = 1;
      }
    }
    energy.col(k + 1) = e_next;
    e_sc = e_sc_next;
  }

  rep.any_violation = std::count(violated.begin(), violated.end(), 1);
  rep.clamped_samples = std::count(clamped.begin(), clamped.end(), 1);
  long worst = -1;
  auto consider = [&](const std::vector<long>& counts, const char* family) {
    for (int k = 0; k < n_t; ++k) {
      if (counts[k] > worst) {
        worst = counts[k];
        rep.worst_row = std::string(family) + "@" + std::to_string(k);
      }
    }
  };
  consider(rep.upper_power, "upper_power");
  consider(rep.lower_power, "lower_power");
  consider(rep.upper_energy, "upper_energy");
  consider(rep.lower_energy, "lower_energy");
  rep.max_violation_prob_hat = static_cast<double>(worst) / m;
  rep.upper_conf_bound = violation_bound(worst, m, settings.alpha);

  rep.quantile_levels = settings.quantiles;
  const int nq = static_cast<int>(settings.quantiles.size());
  rep.energy_quantiles.resize(nq, n_t + 1);
  rep.power_quantiles.resize(nq, n_t);
  for (int k = 0; k <= n_t; ++k) {
    const std::vector<double> col(energy.col(k).data(), energy.col(k).data() + m);
    for (int q = 0; q < nq; ++q) rep.energy_quantiles(q, k) = sample_quantile(col, settings.quantiles[q]);
  }
  for (int k = 0; k < n_t; ++k) {
    const std::vector<double> col(power.col(k).data(), power.col(k).data() + m);
    for (int q = 0; q < nq; ++q) rep.power_quantiles(q, k) = sample_quantile(col, settings.quantiles[q]);
  }
  return rep;
}

namespace {

nlohmann::ordered_json matrix_json(const Eigen::MatrixXd& m) {
  auto out = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
    out.push_back(row);
  }
  return out;
}

}  // namespace

std::string report_json(const SimulationReport& r) {
  nlohmann::ordered_json j;
  j["n_samples"] = r.n_samples;
  j["n_t"] = r.n_t;
  j["alpha"] = r.alpha;
  j["max_violation_prob_hat"] = r.max_violation_prob_hat;
  j["upper_conf_bound"] = r.upper_conf_bound;
  j["worst_row"] = r.worst_row;
  j["samples_with_violation"] = r.any_violation;
  j["clamped_samples"] = r.clamped_samples;
  j["violations"] = {{"upper_power", r.upper_power},
                     {"lower_power", r.lower_power},
                     {"upper_energy", r.upper_energy},
                     {"lower_energy", r.lower_energy}};
  j["quantile_levels"] = r.quantile_levels;
  j["energy_quantiles"] = matrix_json(r.energy_quantiles);
  j["power_quantiles"] = matrix_json(r.power_quantiles);
  j["kernel"] = r.kernel;
  return j.dump(2) + "\n";
}

std::string trajectory_csv(const ClosedLoopRun& run) {
  std::ostringstream os;
  os << "step,energy,p_rc,p_reserve,p_sc\n";
  for (Eigen::Index k = 0; k < run.p_rc.size(); ++k) {
    os << k << ',' << io::format_double(run.energy(k)) << ',' << io::format_double(run.p_rc(k)) << ','
       << io::format_double(run.p_reserve(k)) << ',' << io::format_double(run.p_sc(k)) << '\n';
  }
  return os.str();
}

RevenueStats evaluate_revenue(const CoOptSolution& solution, const ProfileScenarioSet& profiles,
                              const BatteryConfig& cfg, const TimeGrid& grid, const PriceSet& prices,
                              const std::vector<double>& quantiles) {
  profiles.validate();
  prices.validate();
  const int n = grid.n_t;
  if (profiles.size() > 0 && profiles.n_t() != n) throw ScenarioLengthMismatch("profiles do not match the grid");
  const ScEnvelope env = solution.envelope.n_t() == n ? solution.envelope : ScEnvelope::idle(cfg, n);

  RevenueStats out;
  out.fcr = fcr_revenue(solution.r, prices, grid);
  std::vector<double> savings(static_cast<std::size_t>(profiles.size()));
  for (int j = 0; j < profiles.size(); ++j) {
    const PowerSeries prof = profiles.profiles.row(j).transpose();
    const ScRun run = run_sc_rule(prof, env, cfg, grid, cfg.e_0);
    const double base = grid_cost(prof, prices, grid.dt);
    const double cost = grid_cost(prof + run.p_sc, prices, grid.dt);
    const double w = profiles.weights(j);
    out.baseline_cost += w * base;
    out.cost_mean += w * cost;
    savings[static_cast<std::size_t>(j)] = base - cost;
  }
  out.sc_mean = out.baseline_cost - out.cost_mean;
  out.total_mean = out.sc_mean + out.fcr;
  out.quantile_levels = quantiles;
  // Quantiles count every scenario once, whatever its weight.
  if (!savings.empty()) {
    for (double q : quantiles) out.sc_quantiles.push_back(sample_quantile(savings, q));
  }
  return out;
}

}  // namespace coopt
