#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <set>

#include "coopt/frequency.hpp"
#include "coopt/rng.hpp"
#include "doctest.h"

using namespace coopt;

namespace {

RawFrequencyDay constant_day(double f) {
  RawFrequencyDay d;
  d.day = 16071;
  d.timestamps.resize(kSecondsPerDay);
  d.f.assign(kSecondsPerDay, f);
  for (int i = 0; i < kSecondsPerDay; ++i) d.timestamps[i] = i;
  return d;
}

// Drops samples [start, start + len).
RawFrequencyDay with_gap(RawFrequencyDay d, int start, int len) {
  d.timestamps.erase(d.timestamps.begin() + start, d.timestamps.begin() + start + len);
  d.f.erase(d.f.begin() + start, d.f.begin() + start + len);
  return d;
}

}  // namespace

TEST_SUITE("frequency") {

TEST_CASE("gap cleaning") {
  RawFrequencyDay day = constant_day(50.0);
  for (int i = 0; i < kSecondsPerDay; ++i) day.f[i] = 50.0 + 1e-5 * i;

  const auto complete = clean_day(day);
  REQUIRE(complete.accepted());
  CHECK(complete.day->f == day.f);

  const auto short_gap = clean_day(with_gap(day, 1000, 30));
  REQUIRE(short_gap.accepted());
  // Linear data is reproduced exactly by linear interpolation.
  for (int i = 995; i < 1035; ++i) CHECK(short_gap.day->f[i] == doctest::Approx(day.f[i]).epsilon(1e-12));

  CHECK(clean_day(with_gap(day, 1000, 60)).accepted());
  const auto long_gap = clean_day(with_gap(day, 5000, 120));
  REQUIRE_FALSE(long_gap.accepted());
  CHECK(long_gap.rejected->first_bad_gap == doctest::Approx(5000.0).epsilon(1e-9));
  CHECK(long_gap.rejected->gap_samples == 120);

  // A gap at the start cannot be interpolated.
  CHECK_FALSE(clean_day(with_gap(day, 0, 5)).accepted());
}

TEST_CASE("discretization by hand") {
  BatteryConfig cfg = BatteryConfig{}.with_round_trip(0.9);
  const TimeGrid grid = TimeGrid::day(96);
  const auto up = discretize(constant_day(50.2), grid, cfg, true);
  CHECK(up.df.size() == 96);
  CHECK(up.folded);
  for (int k = 0; k < 96; ++k) CHECK(up.df(k) == doctest::Approx(std::sqrt(0.9)).epsilon(1e-12));
  const auto zero = discretize(constant_day(50.0), grid, cfg, true);
  CHECK(zero.df.isZero());
  const auto down = discretize(constant_day(49.9), grid, cfg, true);
  for (int k = 0; k < 96; ++k) CHECK(down.df(k) == doctest::Approx(-0.5 / std::sqrt(0.9)).epsilon(1e-12));

  // Beyond 200 mHz the activation saturates unless clamping is disabled.
  const auto big = discretize(constant_day(50.3), grid, cfg, false);
  CHECK(big.df(0) == doctest::Approx(1.0).epsilon(1e-12));
  const auto raw = discretize(constant_day(50.3), grid, cfg, false, false);
  CHECK(raw.df(0) == doctest::Approx(1.5).epsilon(1e-12));

  CHECK_THROWS_AS(discretize(constant_day(50.0), TimeGrid{7, 24.0 / 7.0}, cfg, false), GridMismatch);
}

TEST_CASE("folding commutes with sign and is order invariant") {
  BatteryConfig cfg = BatteryConfig{}.with_round_trip(0.81);
  const TimeGrid grid = TimeGrid::day(24);
  Rng rng(3);
  RawFrequencyDay pos = constant_day(50.0), neg = constant_day(50.0), mixed = constant_day(50.0);
  for (int i = 0; i < kSecondsPerDay; ++i) {
    pos.f[i] = 50.0 + rng.uniform(0.0, 0.2);
    neg.f[i] = 50.0 - rng.uniform(0.0, 0.2);
    mixed.f[i] = 50.0 + rng.uniform(-0.3, 0.3);
  }
  const auto pf = discretize(pos, grid, cfg, true), pu = discretize(pos, grid, cfg, false);
  const auto nf = discretize(neg, grid, cfg, true), nu = discretize(neg, grid, cfg, false);
  for (int k = 0; k < 24; ++k) {
    CHECK(pf.df(k) == doctest::Approx(cfg.eta_c * pu.df(k)).epsilon(1e-12));
    CHECK(nf.df(k) == doctest::Approx(nu.df(k) / cfg.eta_d).epsilon(1e-12));
  }
  const auto mu = discretize(mixed, grid, cfg, false);
  CHECK(mu.df.cwiseAbs().maxCoeff() <= 1.0);

  // Reverse the samples inside each step.
  RawFrequencyDay shuffled = mixed;
  const int per = kSecondsPerDay / 24;
  for (int k = 0; k < 24; ++k) std::reverse(shuffled.f.begin() + k * per, shuffled.f.begin() + (k + 1) * per);
  const auto ms = discretize(shuffled, grid, cfg, false);
  CHECK((ms.df - mu.df).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("train / validation split") {
  const auto s = split_train_validation(10, 0.7, 5);
  CHECK(s.train.size() == 7);
  CHECK(s.validation.size() == 3);
  const auto again = split_train_validation(10, 0.7, 5);
  CHECK(again.train == s.train);
  CHECK(again.validation == s.validation);
  std::set<int> all(s.train.begin(), s.train.end());
  all.insert(s.validation.begin(), s.validation.end());
  CHECK(all.size() == 10);

  const auto big = split_train_validation(1091, 0.7, 1);
  CHECK(big.train.size() == 764);
  CHECK(big.validation.size() == 327);
  CHECK_THROWS_AS(split_train_validation(1, 0.7, 1), ValidationError);
}

TEST_CASE("timestamps and CSV round trip") {
  CHECK(parse_timestamp("1970-01-02T00:00:01Z") == 86401.0);
  CHECK(parse_timestamp("2014-01-01T00:00:00") == 1388534400.0);
  CHECK(parse_timestamp("12.5") == 12.5);

  SyntheticFrequencyParams p;
  p.missing_rate = 0.001;
  const auto days = synth_frequency_days(p, 2, 9);
  REQUIRE(days.size() == 2);
  const auto dir = std::filesystem::temp_directory_path() / "coopt_freq_test";
  std::filesystem::create_directories(dir);
  write_frequency_csv(dir / "f.csv", days);
  const auto back = read_frequency_csv(dir / "f.csv");
  REQUIRE(back.size() == 2);
  for (int d = 0; d < 2; ++d) {
    CHECK(back[d].day == days[d].day);
    REQUIRE(back[d].f.size() == days[d].f.size());
    // written with micro-hertz resolution
    for (std::size_t i = 0; i < back[d].f.size(); i += 997) CHECK(std::abs(back[d].f[i] - days[d].f[i]) <= 5e-7);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("synthetic frequency and ingestion") {
  SyntheticFrequencyParams p;
  p.outage_rate = 0.3;
  p.missing_rate = 0.0005;
  const auto days = synth_frequency_days(p, 20, 4);
  const auto again = synth_frequency_days(p, 20, 4);
  CHECK(days[7].f == again[7].f);
  const auto res = ingest_days(days, TimeGrid::day(24), BatteryConfig{}, false);
  CHECK(res.scenarios.rows() + static_cast<long>(res.rejected.size()) == 20);
  CHECK(res.rejected.size() >= 1);
  CHECK(res.scenarios.cwiseAbs().maxCoeff() <= 1.0);
}

}  // TEST_SUITE
