#pragma once

// Raw 1 Hz grid frequency: gap cleaning, day segmentation, and discretization
// into per-step normalized deviations (optionally with efficiencies folded in).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "coopt/errors.hpp"
#include "coopt/model.hpp"

namespace coopt {

inline constexpr int kSecondsPerDay = 86400;

struct RawFrequencyDay {
  std::int64_t day = 0;            // days since the Unix epoch (UTC)
  std::vector<double> timestamps;  // seconds since day start
  std::vector<double> f;           // Hz; NaN marks a missing sample
  double f_nom = 50.0;
  double df_max = 0.2;
};

struct FrequencyScenario {
  Eigen::VectorXd df;
  bool folded = false;
};

class GridMismatch : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct Rejected {
  double first_bad_gap = 0.0;  // second of day where the offending gap starts
  int gap_samples = 0;         // missing samples in that gap (-1: open at an edge)
  std::string reason;
};

struct CleanOutcome {
  std::optional<RawFrequencyDay> day;  // set when accepted
  std::optional<Rejected> rejected;

  bool accepted() const { return day.has_value(); }
};

/// Put the day on the full 1 s lattice and linearly fill gaps of at most
/// max_gap_s missing samples. Gaps touching the start or end of the day cannot
/// be interpolated and reject the day.
CleanOutcome clean_day(const RawFrequencyDay& raw, int max_gap_s = 60);

/// Average of the normalized deviation over each step. The deviation is clamped
/// to [-1, 1] first unless clamp is false; with fold the charge/discharge
/// efficiencies are applied sample by sample before averaging.
FrequencyScenario discretize(const RawFrequencyDay& day, const TimeGrid& grid,
                             const BatteryConfig& cfg, bool fold, bool clamp = true);

struct TrainValidationSplit {
  std::vector<int> train;
  std::vector<int> validation;
};

/// Random partition of n items; the training part has round(frac * n) items,
/// kept within [1, n - 1].
TrainValidationSplit split_train_validation(int n, double frac, std::uint64_t seed);

Eigen::MatrixXd scenario_matrix(const std::vector<FrequencyScenario>& scenarios);
Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, const std::vector<int>& rows);

/// CSV with columns timestamp (epoch seconds or ISO-8601 UTC) and frequency_hz,
/// segmented into UTC days.
std::vector<RawFrequencyDay> read_frequency_csv(const std::filesystem::path& path);
void write_frequency_csv(const std::filesystem::path& path, const std::vector<RawFrequencyDay>& days);

// Parses "YYYY-MM-DDTHH:MM:SS[.fff][Z]" or a plain number of epoch seconds.
double parse_timestamp(std::string_view text);

struct IngestResult {
  Eigen::MatrixXd scenarios;  // one row per accepted day
  std::vector<std::int64_t> days;
  std::vector<std::pair<std::int64_t, Rejected>> rejected;
};

IngestResult ingest_days(const std::vector<RawFrequencyDay>& raw, const TimeGrid& grid,
                         const BatteryConfig& cfg, bool fold, bool clamp = true, int max_gap_s = 60);

/// Synthetic 1 Hz frequency: a fast Ornstein-Uhlenbeck component, a slow one
/// carrying intra-day persistence, and a deterministic ramp around each hour
/// change (schedule steps). Deviations in Hz.
struct SyntheticFrequencyParams {
  double fast_std = 0.015;
  double fast_tau_s = 30.0;
  double slow_std = 0.025;
  double slow_tau_s = 2400.0;
  double hourly_step = 0.012;  // amplitude of the per-hour schedule deviation
  double missing_rate = 0.0;   // probability a sample is dropped
  double outage_rate = 0.0;    // per-day probability of a long outage
};

std::vector<RawFrequencyDay> synth_frequency_days(const SyntheticFrequencyParams& params,
                                                  int n_days, std::uint64_t seed,
                                                  std::int64_t first_day = 16071);

}  // namespace coopt
