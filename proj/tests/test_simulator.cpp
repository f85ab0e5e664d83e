#include <cmath>

#include "coopt/rng.hpp"
#include "coopt/simulator.hpp"
#include "doctest.h"
#include "test_data.hpp"

using namespace coopt;

namespace {

RechargePolicy random_policy(Rng& rng, int n, double r) {
  RechargePolicy p = RechargePolicy::zero(n);
  p.r = r;
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < k; ++i) p.d(k, i) = rng.uniform(-0.5, 0.5) * r;
  }
  return p;
}

Eigen::MatrixXd random_df(Rng& rng, int rows, int n) {
  Eigen::MatrixXd m(rows, n);
  for (int i = 0; i < rows; ++i) {
    for (int k = 0; k < n; ++k) m(i, k) = std::clamp(0.3 * rng.normal(), -1.0, 1.0);
  }
  return m;
}

// P(Binomial(n, p) <= k)
double binom_cdf(long k, long n, double p) {
  double term = std::pow(1.0 - p, static_cast<double>(n));
  double total = term;
  for (long i = 1; i <= k; ++i) {
    term *= static_cast<double>(n - i + 1) / static_cast<double>(i) * p / (1.0 - p);
    total += term;
  }
  return total;
}

// Exact upper bound by bisection: largest p with P(X <= k) >= alpha.
double exact_upper(long k, long n, double alpha) {
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (binom_cdf(k, n, mid) > alpha ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_SUITE("simulator") {

TEST_CASE("resampling: empty, single day, determinism") {
  const auto train = testdata::ar_frequency(80, 12, 3);
  const auto model = fit_uncertainty(train, 1e-3);
  CHECK(resample_frequency(train, model, 0, 1).rows() == 0);

  const auto a = resample_frequency(train, model, 50, 9);
  const auto b = resample_frequency(train, model, 70, 9);
  CHECK(a == b.topRows(50));
  CHECK(a != resample_frequency(train, model, 50, 10));

  // One training day: every whitened coordinate has a single value.
  UncertaintyModel one;
  one.mean = train.row(4).transpose();
  one.w = Eigen::MatrixXd::Identity(12, 12);
  one.w_inv = Eigen::MatrixXd::Identity(12, 12);
  const auto same = resample_frequency(train.middleRows(4, 1), one, 20, 2);
  for (int s = 0; s < 20; ++s) CHECK((same.row(s) - train.row(4)).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("bootstrap mean matches the training mean") {
  const auto train = testdata::ar_frequency(150, 8, 17);
  const auto model = fit_uncertainty(train, 1e-3);
  const int n_r = 10000;
  const auto res = resample_frequency(train, model, n_r, 5);
  const Eigen::VectorXd mean = res.colwise().mean().transpose();
  const Eigen::VectorXd train_mean = train.colwise().mean().transpose();
  for (int k = 0; k < 8; ++k) {
    const double sd = std::sqrt((res.col(k).array() - mean(k)).square().sum() / (n_r - 1));
    CHECK(std::abs(mean(k) - train_mean(k)) <= 3.0 * sd / std::sqrt(static_cast<double>(n_r)));
  }
}

TEST_CASE("idle controller never violates") {
  Rng rng(1);
  const TimeGrid grid{24, 1.0};
  const BatteryConfig cfg = BatteryConfig{}.with_round_trip(0.9);
  const auto ctrl = Controller::disturbance(RechargePolicy::zero(24), grid.dt);
  for (int t = 0; t < 20; ++t) {
    const Eigen::VectorXd df = random_df(rng, 1, 24).row(0).transpose();
    const auto run = run_closed_loop(ctrl, cfg, grid, df);
    CHECK_FALSE(run.any_violation());
    CHECK((run.energy.array() == cfg.e_0).all());
  }
}

TEST_CASE("ideal battery: closed loop follows the predicted trajectory") {
  Rng rng(2);
  const TimeGrid grid{16, 0.5};
  BatteryConfig cfg;
  cfg.eta_c = cfg.eta_d = 1.0;
  cfg.e_min = -1e3;
  cfg.e_max = 1e3;
  cfg.p_min = -1e3;
  cfg.p_max = 1e3;
  for (int t = 0; t < 30; ++t) {
    const auto policy = random_policy(rng, 16, rng.uniform(0.5, 6.0));
    const Eigen::VectorXd df = random_df(rng, 1, 16).row(0).transpose();
    const auto run = run_closed_loop(Controller::from_policy(policy, grid.dt), cfg, grid, df);
    const EnergySeries predicted = fcr_energy(policy, df, grid.dt).array() + cfg.e_0;
    CHECK((run.energy - predicted).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((run.p_rc - recharge_disturbance(policy, df)).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("state and disturbance feedback agree on an ideal battery") {
  Rng rng(3);
  const TimeGrid grid{24, 1.0};
  BatteryConfig cfg;
  cfg.eta_c = cfg.eta_d = 1.0;
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto policy = random_policy(rng, 24, rng.uniform(0.1, 7.0));
    const auto sf = Controller::state(to_state_feedback(policy, grid.dt));
    const auto dfb = Controller::disturbance(policy, grid.dt);
    const auto dfs = random_df(rng, 10, 24);
    for (int s = 0; s < 10; ++s) {
      const Eigen::VectorXd df = dfs.row(s).transpose();
      const auto a = run_closed_loop(sf, cfg, grid, df);
      const auto b = run_closed_loop(dfb, cfg, grid, df);
      worst = std::max(worst, (a.p_rc - b.p_rc).cwiseAbs().maxCoeff());
    }
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("energy is clamped after a flagged violation") {
  const TimeGrid grid{4, 1.0};
  BatteryConfig cfg;
  cfg.eta_c = cfg.eta_d = 1.0;
  cfg.e_max = 6.0;
  cfg.e_0 = 5.0;
  RechargePolicy p = RechargePolicy::zero(4);
  p.r = 2.0;
  Eigen::VectorXd df(4);
  df << 1.0, -0.25, 0.0, 0.0;
  const auto run = run_closed_loop(Controller::disturbance(p, 1.0), cfg, grid, df);
  CHECK(run.upper_energy[0] == 1);
  CHECK(run.energy(1) == 6.0);
  CHECK(run.energy(2) == doctest::Approx(5.5));
  CHECK(run.upper_energy[1] == 0);
  CHECK(run.clamped_steps == 1);
}

TEST_CASE("violation bound") {
  CHECK(violation_bound(10, 10000, 0.01) ==
        doctest::Approx(0.001 + 2.3263478740 * std::sqrt(0.001 * 0.999 / 1e4)).epsilon(1e-9));
  CHECK(violation_bound(10000, 10000, 0.01) == 1.0);
  CHECK(violation_bound(0, 1000, 0.01) == doctest::Approx(1.0 - std::pow(0.01, 1.0 / 1000.0)).epsilon(1e-10));
  CHECK(violation_bound(0, 1000, 0.01) == doctest::Approx(0.00459).epsilon(1e-3));
  for (long k : {1L, 2L, 4L}) CHECK(violation_bound(k, 2000, 0.01) == doctest::Approx(exact_upper(k, 2000, 0.01)).epsilon(1e-8));
  CHECK_THROWS_AS(violation_bound(3, 2, 0.01), ValidationError);
}

TEST_CASE("batched simulation matches single runs") {
  Rng rng(8);
  const TimeGrid grid{12, 2.0};
  BatteryConfig cfg = BatteryConfig{}.with_round_trip(0.9);
  cfg.e_max = 4.0;
  cfg.e_0 = 2.0;
  const auto policy = random_policy(rng, 12, 1.5);
  const auto ctrl = Controller::from_policy(policy, grid.dt);
  const auto dfs = random_df(rng, 300, 12);

  ScEnvelope env;
  env.e_min_sc = Eigen::VectorXd::Constant(12, 1.0);
  env.e_max_sc = Eigen::VectorXd::Constant(12, 3.0);
  env.p_min_sc = Eigen::VectorXd::Constant(12, -1.0);
  env.p_max_sc = Eigen::VectorXd::Constant(12, 1.0);
  const Eigen::MatrixXd profiles = testdata::net_profiles(300, 12, 2);

  for (bool with_sc : {false, true}) {
    SimulationSettings st;
    st.quantiles = {0.0, 1.0};
    const auto rep = with_sc ? simulate(ctrl, cfg, grid, dfs, st, &env, &profiles, &kernels::scalar())
                             : simulate(ctrl, cfg, grid, dfs, st, nullptr, nullptr, &kernels::scalar());
    std::vector<long> ue(12, 0), le(12, 0), up(12, 0), lp(12, 0);
    double e_lo = 1e9, e_hi = -1e9;
    long any = 0;
    for (int s = 0; s < 300; ++s) {
      ScInput in{env, profiles.row(s).transpose()};
      const auto run = run_closed_loop(ctrl, cfg, grid, dfs.row(s).transpose(), with_sc ? &in : nullptr);
      for (int k = 0; k < 12; ++k) {
        ue[k] += run.upper_energy[k];
        le[k] += run.lower_energy[k];
        up[k] += run.upper_power[k];
        lp[k] += run.lower_power[k];
      }
      any += run.any_violation();
      e_lo = std::min(e_lo, run.energy(12));
      e_hi = std::max(e_hi, run.energy(12));
    }
    CHECK(rep.upper_energy == ue);
    CHECK(rep.lower_energy == le);
    CHECK(rep.upper_power == up);
    CHECK(rep.lower_power == lp);
    CHECK(rep.any_violation == any);
    CHECK(rep.energy_quantiles(0, 12) == doctest::Approx(e_lo).epsilon(1e-12));
    CHECK(rep.energy_quantiles(1, 12) == doctest::Approx(e_hi).epsilon(1e-12));
    CHECK(rep.max_violation_prob_hat <= rep.upper_conf_bound);

    if (const auto* fast = kernels::avx2()) {
      const auto rep2 = with_sc ? simulate(ctrl, cfg, grid, dfs, st, &env, &profiles, fast)
                                : simulate(ctrl, cfg, grid, dfs, st, nullptr, nullptr, fast);
      CHECK(rep2.kernel == "avx2");
      CHECK((rep2.energy_quantiles - rep.energy_quantiles).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK(rep2.upper_energy == rep.upper_energy);
      CHECK(rep2.lower_energy == rep.lower_energy);
    }
  }
}

TEST_CASE("reports are reproducible") {
  const auto train = testdata::ar_frequency(60, 12, 4);
  const auto model = fit_uncertainty(train, 1e-2);
  const TimeGrid grid{12, 2.0};
  Rng rng(6);
  const auto ctrl = Controller::from_policy(random_policy(rng, 12, 2.0), grid.dt);
  const BatteryConfig cfg = BatteryConfig{}.with_round_trip(0.9);
  const auto a = report_json(simulate(ctrl, cfg, grid, resample_frequency(train, model, 500, 3)));
  const auto b = report_json(simulate(ctrl, cfg, grid, resample_frequency(train, model, 500, 3)));
  CHECK(a == b);
  CHECK(a.find("\"upper_conf_bound\"") != std::string::npos);
  const auto run = run_closed_loop(ctrl, cfg, grid, train.row(0).transpose());
  const auto csv = trajectory_csv(run);
  CHECK(csv.rfind("step,energy,p_rc,p_reserve,p_sc\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);
}

TEST_CASE("revenue arithmetic and decomposition") {
  const TimeGrid grid = TimeGrid::day(24);
  const PriceSet prices;
  CoOptSolution sol;
  sol.status = SolveStatus::optimal;
  sol.r = 5.65;
  const BatteryConfig cfg;
  const auto zero = ProfileScenarioSet::uniform(Eigen::MatrixXd::Zero(3, 24));
  const auto rev = evaluate_revenue(sol, zero, cfg, grid, prices);
  CHECK(rev.fcr == doctest::Approx(14.71 * 0.00565 * 24).epsilon(1e-12));
  CHECK(std::abs(rev.fcr - 1.995) <= 0.01);
  CHECK(rev.sc_mean == 0.0);

  sol.r = 0.0;
  CHECK(evaluate_revenue(sol, zero, cfg, grid, prices).total_mean == 0.0);

  // FCR part is linear in r and c_r.
  sol.r = 2.0;
  PriceSet doubled = prices;
  doubled.c_r *= 2.0;
  const double base = evaluate_revenue(sol, zero, cfg, grid, prices).fcr;
  CHECK(evaluate_revenue(sol, zero, cfg, grid, doubled).fcr == doctest::Approx(2.0 * base).epsilon(1e-14));
  sol.r = 4.0;
  CHECK(evaluate_revenue(sol, zero, cfg, grid, prices).fcr == doctest::Approx(2.0 * base).epsilon(1e-14));
}

TEST_CASE("single profile: rule revenue equals the LP optimum") {
  const TimeGrid grid{12, 2.0};
  const auto model = fit_uncertainty(testdata::ar_frequency(80, 12, 31), 1e-2);
  BatteryConfig cfg = BatteryConfig{}.with_round_trip(0.9);
  const PriceSet prices;
  const auto set = ProfileScenarioSet::uniform(testdata::net_profiles(1, 12, 3));
  const auto sol = solve(build_combined_problem(model, cfg, grid, prices, set));
  REQUIRE(sol.feasible());
  const auto rev = evaluate_revenue(sol, set, cfg, grid, prices);
  CHECK(rev.total_mean == doctest::Approx(rev.sc_mean + rev.fcr).epsilon(1e-15));
  // LP: objective = bill with battery - reserve payment.
  CHECK(rev.baseline_cost - rev.total_mean == doctest::Approx(sol.objective).epsilon(1e-5));
}

TEST_CASE("sample quantile") {
  CHECK(sample_quantile({3.0, 1.0, 2.0}, 0.5) == 2.0);
  CHECK(sample_quantile({1.0, 2.0}, 0.25) == 1.25);
  CHECK(sample_quantile({4.0}, 0.9) == 4.0);
  CHECK_THROWS_AS(sample_quantile({}, 0.5), EmptySample);
}

}  // TEST_SUITE
