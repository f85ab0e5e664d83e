#include "coopt/frequency.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "coopt/io.hpp"
#include "coopt/rng.hpp"

namespace coopt {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Howard Hinnant's days_from_civil.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

int parse_int(std::string_view s) {
  int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ValidationError("bad timestamp field: " + std::string(s));
  }
  return v;
}

}  // namespace

double parse_timestamp(std::string_view text) {
  text = io::trim(text);
  double numeric = 0.0;
  if (io::parse_double(text, numeric)) return numeric;
  // YYYY-MM-DDTHH:MM:SS[.fff][Z]
  if (text.size() < 19 || text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' ') ||
      text[13] != ':' || text[16] != ':') {
    throw ValidationError("unrecognized timestamp: " + std::string(text));
  }
  const int year = parse_int(text.substr(0, 4));
  const int month = parse_int(text.substr(5, 2));
  const int dayv = parse_int(text.substr(8, 2));
  const int hour = parse_int(text.substr(11, 2));
  const int minute = parse_int(text.substr(14, 2));
  std::string_view rest = text.substr(17);
  if (!rest.empty() && rest.back() == 'Z') rest.remove_suffix(1);
  double seconds = 0.0;
  if (!io::parse_double(rest, seconds)) throw ValidationError("bad seconds in timestamp: " + std::string(text));
  if (month < 1 || month > 12 || dayv < 1 || dayv > 31 || hour > 23 || minute > 59) {
    throw ValidationError("timestamp out of range: " + std::string(text));
  }
  const std::int64_t days = days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(dayv));
  return static_cast<double>(days) * kSecondsPerDay + hour * 3600.0 + minute * 60.0 + seconds;
}

CleanOutcome clean_day(const RawFrequencyDay& raw, int max_gap_s) {
  if (raw.timestamps.size() != raw.f.size()) throw ValidationError("timestamps and samples differ in length");
  for (std::size_t i = 1; i < raw.timestamps.size(); ++i) {
    if (!(raw.timestamps[i] > raw.timestamps[i - 1])) throw ValidationError("timestamps must be strictly increasing");
  }

  RawFrequencyDay out = raw;
  out.timestamps.resize(kSecondsPerDay);
  std::iota(out.timestamps.begin(), out.timestamps.end(), 0.0);
  out.f.assign(kSecondsPerDay, kNaN);
  for (std::size_t i = 0; i < raw.timestamps.size(); ++i) {
    const double t = std::round(raw.timestamps[i]);
    if (t < 0 || t >= kSecondsPerDay) continue;
    out.f[static_cast<std::size_t>(t)] = raw.f[i];
  }

  CleanOutcome outcome;
  int s = 0;
  while (s < kSecondsPerDay) {
    if (!std::isnan(out.f[s])) {
      ++s;
      continue;
    }
    int e = s;
    while (e < kSecondsPerDay && std::isnan(out.f[e])) ++e;
    const int len = e - s;
    if (s == 0 || e == kSecondsPerDay) {
      outcome.rejected = Rejected{static_cast<double>(s), -1,
                                  "missing samples at the " + std::string(s == 0 ? "start" : "end") + " of the day"};
      return outcome;
    }
    if (len > max_gap_s) {
      outcome.rejected = Rejected{static_cast<double>(s), len,
                                  "gap of " + std::to_string(len) + " s exceeds " + std::to_string(max_gap_s) + " s"};
      return outcome;
    }
    const double f0 = out.f[s - 1];
    const double f1 = out.f[e];
    for (int i = s; i < e; ++i) {
      const double w = static_cast<double>(i - s + 1) / (len + 1);
      out.f[i] = f0 + w * (f1 - f0);
    }
    s = e;
  }
  outcome.day = std::move(out);
  return outcome;
}

FrequencyScenario discretize(const RawFrequencyDay& day, const TimeGrid& grid, const BatteryConfig& cfg,
                             bool fold, bool clamp) {
  grid.validate();
  const double step_s = grid.dt * 3600.0;
  const double rounded = std::round(step_s);
  if (std::abs(step_s - rounded) > 1e-9 || static_cast<long>(rounded) <= 0 ||
      kSecondsPerDay % static_cast<long>(rounded) != 0) {
    throw GridMismatch("step of " + io::format_double(step_s) + " s does not divide a day");
  }
  const int per_step = static_cast<int>(rounded);
  if (per_step * grid.n_t != kSecondsPerDay) {
    throw GridMismatch("grid covers " + io::format_double(grid.horizon()) + " h, expected 24 h");
  }
  if (static_cast<int>(day.f.size()) != kSecondsPerDay) {
    throw ValidationError("discretize expects a cleaned day with 86400 samples");
  }
  if (fold) cfg.validate();

  FrequencyScenario out;
  out.folded = fold;
  out.df.resize(grid.n_t);
  for (int k = 0; k < grid.n_t; ++k) {
    double acc = 0.0;
    for (int i = k * per_step; i < (k + 1) * per_step; ++i) {
      double x = (day.f[i] - day.f_nom) / day.df_max;
      if (std::isnan(x)) throw ValidationError("discretize expects a cleaned day without missing samples");
      if (clamp) x = std::clamp(x, -1.0, 1.0);
      if (fold) x = cfg.eta_c * std::max(x, 0.0) - std::max(-x, 0.0) / cfg.eta_d;
      acc += x;
    }
    out.df[k] = acc / per_step;
  }
  return out;
}

TrainValidationSplit split_train_validation(int n, double frac, std::uint64_t seed) {
  if (n < 2) throw ValidationError("need at least 2 days to split");
  if (!(frac > 0.0 && frac < 1.0)) throw ValidationError("split fraction must lie in (0, 1)");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed, 0x5eed);
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(order[i], order[j]);
  }
  const int n_train = std::clamp(static_cast<int>(std::lround(frac * n)), 1, n - 1);
  TrainValidationSplit split;
  split.train.assign(order.begin(), order.begin() + n_train);
  split.validation.assign(order.begin() + n_train, order.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  return split;
}

Eigen::MatrixXd scenario_matrix(const std::vector<FrequencyScenario>& scenarios) {
  if (scenarios.empty()) return {};
  const Eigen::Index n_t = scenarios.front().df.size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(scenarios.size()), n_t);
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    if (scenarios[i].df.size() != n_t) throw ValidationError("scenarios differ in length");
    m.row(static_cast<Eigen::Index>(i)) = scenarios[i].df.transpose();
  }
  return m;
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

std::vector<RawFrequencyDay> read_frequency_csv(const std::filesystem::path& path) {
  const std::string text = io::read_text(path);
  std::map<std::int64_t, RawFrequencyDay> days;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = io::trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto fields = io::split(view, ',');
    if (fields.size() < 2) throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": need 2 columns");
    double f = 0.0;
    if (!io::parse_double(fields[1], f)) {
      if (first) {
        first = false;
        continue;  // header
      }
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": bad frequency value");
    }
    first = false;
    const double t = parse_timestamp(fields[0]);
    const auto day = static_cast<std::int64_t>(std::floor(t / kSecondsPerDay));
    auto& d = days[day];
    d.day = day;
    d.timestamps.push_back(t - static_cast<double>(day) * kSecondsPerDay);
    d.f.push_back(f);
  }
  std::vector<RawFrequencyDay> out;
  out.reserve(days.size());
  for (auto& [_, d] : days) out.push_back(std::move(d));
  return out;
}

void write_frequency_csv(const std::filesystem::path& path, const std::vector<RawFrequencyDay>& days) {
  std::string out = "timestamp,frequency_hz\n";
  char buf[64];
  for (const auto& d : days) {
    for (std::size_t i = 0; i < d.f.size(); ++i) {
      if (std::isnan(d.f[i])) continue;
      const double t = static_cast<double>(d.day) * kSecondsPerDay + d.timestamps[i];
      const int n = std::snprintf(buf, sizeof(buf), "%.0f,%.6f\n", t, d.f[i]);
      out.append(buf, static_cast<std::size_t>(n));
    }
  }
  io::write_text(path, out);
}

IngestResult ingest_days(const std::vector<RawFrequencyDay>& raw, const TimeGrid& grid, const BatteryConfig& cfg,
                         bool fold, bool clamp, int max_gap_s) {
  IngestResult result;
  std::vector<FrequencyScenario> kept;
  for (const auto& day : raw) {
    CleanOutcome cleaned = clean_day(day, max_gap_s);
    if (!cleaned.accepted()) {
      result.rejected.emplace_back(day.day, *cleaned.rejected);
      continue;
    }
    kept.push_back(discretize(*cleaned.day, grid, cfg, fold, clamp));
    result.days.push_back(day.day);
  }
  result.scenarios = scenario_matrix(kept);
  if (kept.empty()) result.scenarios.resize(0, grid.n_t);
  return result;
}

std::vector<RawFrequencyDay> synth_frequency_days(const SyntheticFrequencyParams& p, int n_days,
                                                  std::uint64_t seed, std::int64_t first_day) {
  std::vector<RawFrequencyDay> days;
  days.reserve(static_cast<std::size_t>(std::max(n_days, 0)));
  const double a_fast = std::exp(-1.0 / p.fast_tau_s);
  const double a_slow = std::exp(-1.0 / p.slow_tau_s);
  const double b_fast = p.fast_std * std::sqrt(1.0 - a_fast * a_fast);
  const double b_slow = p.slow_std * std::sqrt(1.0 - a_slow * a_slow);
  constexpr int kRamp = 300;  // seconds to reach a new hourly schedule level

  for (int d = 0; d < n_days; ++d) {
    Rng rng(seed, static_cast<std::uint64_t>(d));
    RawFrequencyDay day;
    day.day = first_day + d;
    day.timestamps.reserve(kSecondsPerDay);
    day.f.reserve(kSecondsPerDay);

    double fast = p.fast_std * rng.normal();
    double slow = p.slow_std * rng.normal();
    std::vector<double> level(25);
    for (double& l : level) l = p.hourly_step * rng.normal();

    int outage_start = -1;
    int outage_len = 0;
    if (p.outage_rate > 0.0 && rng.uniform() < p.outage_rate) {
      outage_len = 120 + static_cast<int>(rng.below(600));
      outage_start = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(kSecondsPerDay - outage_len - 2)));
    }

    for (int t = 0; t < kSecondsPerDay; ++t) {
      fast = a_fast * fast + b_fast * rng.normal();
      slow = a_slow * slow + b_slow * rng.normal();
      const int hour = t / 3600;
      const int into = t % 3600;
      const double w = std::min(1.0, static_cast<double>(into) / kRamp);
      const double prev = hour == 0 ? level[0] : level[hour - 1];
      const double sched = prev + w * (level[hour] - prev);
      const bool dropped = (p.missing_rate > 0.0 && rng.uniform() < p.missing_rate && t > 0 && t < kSecondsPerDay - 1) ||
                           (outage_start >= 0 && t >= outage_start && t < outage_start + outage_len);
      if (dropped) continue;
      day.timestamps.push_back(t);
      day.f.push_back(day.f_nom + fast + slow + sched);
    }
    days.push_back(std::move(day));
  }
  return days;
}

}  // namespace coopt
