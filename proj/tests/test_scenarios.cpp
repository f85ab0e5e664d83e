#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>

#include "coopt/io.hpp"
#include "coopt/rng.hpp"
#include "coopt/scenarios.hpp"
#include "doctest.h"
#include "test_data.hpp"

using namespace coopt;

namespace {

// Independent brute-force Kantorovich distance with optimal reassignment.
double brute_distance(const Eigen::MatrixXd& x, const Eigen::VectorXd& w, const std::vector<int>& kept) {
  double total = 0.0;
  for (int i = 0; i < x.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int k : kept) best = std::min(best, (x.row(i) - x.row(k)).norm());
    total += w(i) * best;
  }
  return total;
}

// Minimum over all subsets of the given size.
double brute_optimum(const Eigen::MatrixXd& x, const Eigen::VectorXd& w, int size) {
  const int n = static_cast<int>(x.rows());
  double best = std::numeric_limits<double>::infinity();
  for (int mask = 0; mask < (1 << n); ++mask) {
    if (__builtin_popcount(mask) != size) continue;
    std::vector<int> kept;
    for (int i = 0; i < n; ++i) {
      if (mask & (1 << i)) kept.push_back(i);
    }
    best = std::min(best, brute_distance(x, w, kept));
  }
  return best;
}

// Same greedy rule written the slow way: try every removal, recompute the
// whole distance.
std::vector<int> slow_greedy(const Eigen::MatrixXd& x, const Eigen::VectorXd& w, int target) {
  std::vector<int> kept(x.rows());
  std::iota(kept.begin(), kept.end(), 0);
  while (static_cast<int>(kept.size()) > target) {
    std::size_t best_pos = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t pos = 0; pos < kept.size(); ++pos) {
      std::vector<int> trial = kept;
      trial.erase(trial.begin() + static_cast<long>(pos));
      const double v = brute_distance(x, w, trial);
      if (v < best) {
        best = v;
        best_pos = pos;
      }
    }
    kept.erase(kept.begin() + static_cast<long>(best_pos));
  }
  return kept;
}

ProfileScenarioSet random_set(Rng& rng, int n, int dim, bool random_weights) {
  ProfileScenarioSet s;
  s.profiles.resize(n, dim);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < dim; ++k) s.profiles(i, k) = rng.normal();
  }
  s.weights.resize(n);
  for (int i = 0; i < n; ++i) s.weights(i) = random_weights ? rng.uniform(0.1, 1.0) : 1.0;
  s.weights /= s.weights.sum();
  return s;
}

Eigen::MatrixXd scalar_profiles(std::initializer_list<double> v) {
  Eigen::MatrixXd m(static_cast<int>(v.size()), 1);
  int i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

}  // namespace

TEST_SUITE("scenarios") {

TEST_CASE("three scalar profiles reduce to the two far apart") {
  const auto set = ProfileScenarioSet::uniform(scalar_profiles({0.0, 1.0, 10.0}));
  const auto red = reduce_backward_detail(set, 2);
  // Removing 0 or 1 costs 1/3 each, removing 10 costs 3; the tie goes to index 0.
  CHECK(red.kept == std::vector<int>{1, 2});
  REQUIRE(red.reduced.size() == 2);
  CHECK(red.reduced.profiles(0, 0) == 1.0);
  CHECK(red.reduced.profiles(1, 0) == 10.0);
  CHECK(red.reduced.weights(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(red.reduced.weights(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(red.distance == doctest::Approx(brute_optimum(set.profiles, set.weights, 2)).epsilon(1e-15));
}

TEST_CASE("duplicates merge at zero distance") {
  Eigen::MatrixXd x(2, 3);
  x << 1.0, 2.0, 3.0, 1.0, 2.0, 3.0;
  const auto red = reduce_backward_detail(ProfileScenarioSet::uniform(x), 1);
  CHECK(red.reduced.size() == 1);
  CHECK(red.reduced.weights(0) == 1.0);
  CHECK(red.distance == 0.0);

  // Duplicates among distinct profiles are removed before anything else; of
  // each pair the lower index goes first.
  Rng rng(4);
  auto set = random_set(rng, 8, 5, true);
  set.profiles.row(6) = set.profiles.row(2);
  set.profiles.row(7) = set.profiles.row(4);
  const auto red2 = reduce_backward_detail(set, 6);
  CHECK(red2.distance == 0.0);
  CHECK(red2.kept == std::vector<int>{0, 1, 3, 5, 6, 7});
  CHECK(red2.reduced.weights(4) == doctest::Approx(set.weights(2) + set.weights(6)).epsilon(1e-15));
  CHECK(red2.reduced.weights(5) == doctest::Approx(set.weights(4) + set.weights(7)).epsilon(1e-15));
}

TEST_CASE("reducing to the full size returns the input") {
  Rng rng(9);
  const auto set = random_set(rng, 7, 4, true);
  const auto out = reduce_backward(set, 7);
  CHECK(out.profiles == set.profiles);
  CHECK(out.weights == set.weights);
  CHECK_THROWS_AS(reduce_backward(set, 0), ValidationError);
  CHECK_THROWS_AS(reduce_backward(set, 8), ValidationError);
}

TEST_CASE("greedy stays within 1.5 of the best subset on small instances") {
  Rng rng(2024);
  double worst_ratio = 1.0;
  int instances = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(5));
    const int dim = 1 + static_cast<int>(rng.below(4));
    const auto set = random_set(rng, n, dim, trial % 2 == 1);
    for (int target = 1; target <= n; ++target) {
      const auto red = reduce_backward_detail(set, target);
      const double opt = brute_optimum(set.profiles, set.weights, target);
      CHECK(red.distance == doctest::Approx(brute_distance(set.profiles, set.weights, red.kept)).epsilon(1e-12));
      CHECK(red.reduced.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK((red.reduced.weights.array() >= 0.0).all());
      CHECK(red.distance <= 1.5 * opt + 1e-12);
      if (opt > 0.0) worst_ratio = std::max(worst_ratio, red.distance / opt);
      ++instances;
    }
  }
  MESSAGE("worst greedy/optimal ratio over " << instances << " reductions: " << worst_ratio);
}

TEST_CASE("incremental bookkeeping matches the slow greedy") {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const auto set = random_set(rng, 18, 6, true);
    for (int target : {1, 4, 11}) {
      CHECK(reduce_backward_detail(set, target).kept == slow_greedy(set.profiles, set.weights, target));
    }
  }
}

TEST_CASE("kantorovich distance of the kept subset") {
  const auto set = ProfileScenarioSet::uniform(scalar_profiles({0.0, 1.0, 10.0, 12.0}));
  CHECK(kantorovich_distance(set, {1, 3}) == doctest::Approx(0.25 * 1.0 + 0.25 * 2.0).epsilon(1e-15));
  CHECK(kantorovich_distance(set, {0, 1, 2, 3}) == 0.0);
  CHECK_THROWS_AS(kantorovich_distance(set, {}), ValidationError);
}

TEST_CASE("synthetic profiles: empty, noiseless and daylight") {
  ProfileParams params;
  CHECK(synth_profiles(ProfileKind::net, params, 0, 1).size() == 0);

  const auto quiet = params.noiseless();
  const auto house = synth_profiles(ProfileKind::household, quiet, 5, 3);
  const auto pv = synth_profiles(ProfileKind::pv, quiet, 5, 3);
  const auto net = synth_profiles(ProfileKind::net, quiet, 5, 3);
  for (int k = 0; k < quiet.n_t; ++k) {
    const double h = k + 0.5;
    const double demand = quiet.base_kw + quiet.morning_kw * std::exp(-0.5 * std::pow((h - 7.5) / 1.2, 2)) +
                          quiet.evening_kw * std::exp(-0.5 * std::pow((h - 19.0) / 2.0, 2));
    const double sun = (h > 7.0 && h < 18.5) ? 4.0 * 0.55 * std::sin(M_PI * (h - 7.0) / 11.5) : 0.0;
    for (int j = 0; j < 5; ++j) {
      CHECK(house.profiles(j, k) == doctest::Approx(demand).epsilon(1e-14));
      CHECK(pv.profiles(j, k) == doctest::Approx(sun).epsilon(1e-14));
      CHECK(net.profiles(j, k) == doctest::Approx(demand - sun).epsilon(1e-14));
    }
  }

  const auto noisy = synth_profiles(ProfileKind::pv, params, 50, 8);
  const auto day = daylight_steps(params);
  for (int k = 0; k < params.n_t; ++k) {
    if (!day[k]) CHECK(noisy.profiles.col(k).cwiseAbs().maxCoeff() == 0.0);
    if (day[k]) CHECK(noisy.profiles.col(k).maxCoeff() > 0.0);
  }
  CHECK(noisy.profiles.minCoeff() >= 0.0);
  CHECK(noisy.profiles.maxCoeff() <= params.pv_kwp);
}

TEST_CASE("synthetic profiles are reproducible and prefix-stable") {
  const ProfileParams params;
  const auto a = synth_profiles(ProfileKind::net, params, 20, 42);
  const auto b = synth_profiles(ProfileKind::net, params, 20, 42);
  const auto c = synth_profiles(ProfileKind::net, params, 30, 42);
  const auto d = synth_profiles(ProfileKind::net, params, 20, 43);
  CHECK(a.profiles == b.profiles);
  CHECK(c.profiles.topRows(20) == a.profiles);
  CHECK(d.profiles != a.profiles);
  CHECK(a.weights.sum() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(parse_profile_kind("wind"), ValidationError);
  CHECK(parse_profile_kind("pv") == ProfileKind::pv);
}

TEST_CASE("scenario CSV round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "coopt_scenarios_test";
  std::filesystem::create_directories(dir);
  Rng rng(5);
  auto set = random_set(rng, 6, 4, true);
  write_scenarios_csv(dir / "w.csv", set);
  const auto back = read_scenarios_csv(dir / "w.csv");
  CHECK(back.profiles == set.profiles);
  CHECK((back.weights - set.weights).cwiseAbs().maxCoeff() <= 1e-15);

  io::write_csv_matrix(dir / "plain.csv", set.profiles);
  const auto plain = read_scenarios_csv(dir / "plain.csv");
  CHECK(plain.profiles == set.profiles);
  CHECK((plain.weights.array() == 1.0 / 6.0).all());
  std::filesystem::remove_all(dir);
}

TEST_CASE("quantiles") {
  // Reference values from standard tables.
  CHECK(normal_upper_quantile(0.005) == doctest::Approx(2.5758293035489).epsilon(1e-10));
  CHECK(normal_upper_quantile(0.05) == doctest::Approx(1.6448536269515).epsilon(1e-10));
  CHECK(std::abs(normal_upper_quantile(0.5)) < 1e-15);
  CHECK(student_t_upper_quantile(0.005, 9) == doctest::Approx(3.2498355415).epsilon(1e-9));
  CHECK(student_t_upper_quantile(0.025, 1) == doctest::Approx(12.7062047362).epsilon(1e-9));
  CHECK_THROWS_AS(normal_upper_quantile(0.0), ValidationError);
}

TEST_CASE("gap formula from samples") {
  Eigen::VectorXd u(4), l(3);
  u << 1.0, 2.0, 3.0, 4.0;
  l << 0.5, 1.5, 1.0;
  const auto g = gap_from_samples(u, l, 0.05, 10);
  const double su = std::sqrt((2.25 + 0.25 + 0.25 + 2.25) / 3.0);
  const double sl = std::sqrt((0.25 + 0.25 + 0.0) / 2.0);
  const double expected = 2.5 - 1.0 + 1.6448536269515 * su / 2.0 + 2.9199855803 * sl / std::sqrt(3.0);
  CHECK(g.gap == doctest::Approx(expected).epsilon(1e-9));
  CHECK(g.relative_gap() == doctest::Approx(expected / 2.5).epsilon(1e-9));

  const auto median = gap_from_samples(u, l, 0.5, 10);
  CHECK(median.gap == doctest::Approx(1.5).epsilon(1e-12));
  CHECK_THROWS_AS(gap_from_samples(u, Eigen::VectorXd::Ones(1), 0.05, 10), EmptySample);
}

TEST_CASE("recourse at the optimal envelope reproduces in-sample costs") {
  const TimeGrid grid{8, 3.0};
  const auto model = fit_uncertainty(testdata::ar_frequency(60, 8, 21), 1e-2);
  BatteryConfig cfg;
  cfg.e_max = 6.0;
  cfg.e_0 = 3.0;
  cfg.p_max = 3.0;
  cfg.p_min = -3.0;
  PriceSet prices;
  const auto set = ProfileScenarioSet::uniform(testdata::net_profiles(6, 8, 4));
  auto solver = make_solver();
  const auto sol = solve(build_combined_problem(model, cfg, grid, prices, set), *solver);
  REQUIRE(sol.feasible());
  const auto rec = evaluate_recourse(sol.envelope, cfg, grid, prices, set.profiles, *solver, 4);
  for (int j = 0; j < set.size(); ++j) CHECK(rec(j) <= sol.scenario_cost(j) + 1e-6);
  CHECK(set.weights.dot(rec) == doctest::Approx(sol.sc_cost).epsilon(1e-6));

  // Pinned envelope: the battery cannot move, so the cost is the bare grid bill.
  const auto idle = evaluate_recourse(ScEnvelope::idle(cfg, 8), cfg, grid, prices, set.profiles, *solver);
  for (int j = 0; j < set.size(); ++j) {
    double bill = 0.0;
    for (int k = 0; k < 8; ++k) {
      const double p = set.profiles(j, k);
      bill += grid.dt * (p > 0.0 ? prices.c_cons * p : prices.c_inj * p);
    }
    CHECK(idle(j) == doctest::Approx(bill).epsilon(1e-6));
  }
}

TEST_CASE("gap of a deterministic source is zero") {
  const TimeGrid grid{8, 3.0};
  const auto model = fit_uncertainty(testdata::ar_frequency(60, 8, 22), 1e-2);
  BatteryConfig cfg;
  cfg.e_max = 6.0;
  cfg.e_0 = 3.0;
  cfg.p_max = 3.0;
  cfg.p_min = -3.0;
  const PriceSet prices;
  const Eigen::RowVectorXd fixed = testdata::net_profiles(1, 8, 7).row(0);
  const ProfileSource source = [&](int n, std::uint64_t) { return Eigen::MatrixXd(fixed.replicate(n, 1)); };
  auto solver = make_solver();
  const auto cand = solve(build_combined_problem(model, cfg, grid, prices, ProfileScenarioSet::uniform(source(3, 0))),
                          *solver);
  REQUIRE(cand.feasible());
  GapSettings gs;
  gs.n_u = 20;
  gs.n_l = 3;
  gs.n_sc = 3;
  const auto g = estimate_gap(model, cfg, grid, prices, cand, source, gs, *solver);
  CHECK(g.sigma_u <= 1e-12);
  CHECK(std::abs(g.upper_mean - g.lower_mean) <= 1e-6);
  CHECK(std::abs(g.gap) <= 1e-5);
  CHECK(g.n_u == 20);
  CHECK(g.n_l == 3);
}

TEST_CASE("gap is nonnegative on a noisy source") {
  const TimeGrid grid{8, 3.0};
  const auto model = fit_uncertainty(testdata::ar_frequency(60, 8, 23), 1e-2);
  BatteryConfig cfg;
  cfg.e_max = 6.0;
  cfg.e_0 = 3.0;
  cfg.p_max = 3.0;
  cfg.p_min = -3.0;
  const PriceSet prices;
  ProfileParams params;
  params.n_t = 8;
  const auto source = synthetic_source(ProfileKind::net, params);
  auto solver = make_solver();
  const auto cand = solve(build_combined_problem(model, cfg, grid, prices, ProfileScenarioSet::uniform(source(20, 99))),
                          *solver);
  REQUIRE(cand.feasible());
  GapSettings gs;
  gs.n_u = 200;
  gs.n_l = 4;
  gs.n_sc = 20;
  gs.alpha = 0.05;
  const auto g = estimate_gap(model, cfg, grid, prices, cand, source, gs, *solver);
  CHECK(g.gap >= 0.0);
  CHECK(g.lower_values.size() == 4);
  const auto again = estimate_gap(model, cfg, grid, prices, cand, source, gs, *solver);
  CHECK(again.gap == g.gap);
  CHECK(gap_json(again) == gap_json(g));
}

}  // TEST_SUITE
