#pragma once

// Profile scenarios: synthetic generation, CSV files, backward reduction under
// the Kantorovich distance, and statistical bounds on the optimality gap of a
// sample average approximation.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "coopt/model.hpp"
#include "coopt/optimizer.hpp"
#include "coopt/uncertainty.hpp"

namespace coopt {

// ---- reduction ----

struct Reduction {
  std::vector<int> kept;      // indices into the input, ascending
  std::vector<int> assigned;  // per input scenario, the kept scenario it maps to
  ProfileScenarioSet reduced;
  double distance = 0.0;  // Kantorovich distance between input and reduced set
};

/// Backward reduction of single scenarios. Each step removes the scenario
/// whose removal raises the Kantorovich distance the least (ties go to the
/// lowest index); removed weight ends up on the nearest survivor.
Reduction reduce_backward_detail(const ProfileScenarioSet& set, int target_n);
ProfileScenarioSet reduce_backward(const ProfileScenarioSet& set, int target_n);

/// Kantorovich distance between the set and the subset `kept` when every
/// removed scenario sends its weight to its nearest kept scenario (which is
/// optimal when the reduced weights are free).
double kantorovich_distance(const ProfileScenarioSet& set, const std::vector<int>& kept);

/// Euclidean distances between all pairs of profiles.
Eigen::MatrixXd profile_distances(const Eigen::MatrixXd& profiles);

// ---- synthetic profiles ----

enum class ProfileKind { household, pv, net };
ProfileKind parse_profile_kind(std::string_view s);
std::string_view to_string(ProfileKind kind);

struct ProfileParams {
  int n_t = 24;
  // household demand, kW
  double base_kw = 0.3;
  double morning_kw = 0.6;
  double morning_hour = 7.5;
  double morning_width_h = 1.2;
  double evening_kw = 1.1;
  double evening_hour = 19.0;
  double evening_width_h = 2.0;
  double demand_noise = 0.3;  // sigma of the multiplicative lognormal noise
  // PV production, kW
  double pv_kwp = 4.0;
  double peak_fraction = 0.55;  // clear-sky output at solar noon per kWp
  double sunrise_hour = 7.0;
  double sunset_hour = 18.5;
  double cloudiness = 0.6;   // clear-sky index drawn uniformly from [1 - cloudiness, 1]
  double pv_noise = 0.15;    // per-step lognormal sigma on top of the clear-sky index

  void validate() const;
  /// Zero noise: every draw equals the base shape.
  ProfileParams noiseless() const;
};

/// n draws of kind; row j depends only on (seed, j).
ProfileScenarioSet synth_profiles(ProfileKind kind, const ProfileParams& params, int n, std::uint64_t seed);

/// True for steps whose midpoint lies between sunrise and sunset.
std::vector<bool> daylight_steps(const ProfileParams& params);

// ---- files ----

/// CSV with one profile per row. A first column named "weight" carries the
/// probabilities; without it the weights are uniform.
ProfileScenarioSet read_scenarios_csv(const std::filesystem::path& path);
void write_scenarios_csv(const std::filesystem::path& path, const ProfileScenarioSet& set);
std::string scenarios_csv_string(const ProfileScenarioSet& set);

// ---- optimality gap ----

struct GapEstimate {
  double upper_mean = 0.0;  // EUR
  double lower_mean = 0.0;  // EUR
  double sigma_u = 0.0;
  double sigma_l = 0.0;
  double z_alpha = 0.0;
  double t_alpha = 0.0;
  double gap = 0.0;         // EUR
  double alpha = 0.0;
  int n_u = 0;
  int n_l = 0;
  int n_sc = 0;
  std::vector<double> lower_values;  // the n_l SAA optima

  /// gap relative to |upper_mean|.
  double relative_gap() const;
};

/// Standard normal and Student-t upper quantiles: P(X > q) = alpha.
double normal_upper_quantile(double alpha);
double student_t_upper_quantile(double alpha, int dof);

/// gap = (ubar - lbar) + z_alpha sigma_u / sqrt(n_u) + t_{alpha,n_l-1} sigma_l / sqrt(n_l),
/// with sample standard deviations.
GapEstimate gap_from_samples(const Eigen::VectorXd& upper, const Eigen::VectorXd& lower, double alpha, int n_sc);

/// Draws n iid profiles; the same (n, seed) must give the same matrix.
using ProfileSource = std::function<Eigen::MatrixXd(int n, std::uint64_t seed)>;

struct GapSettings {
  int n_u = 10000;
  int n_l = 10;
  int n_sc = 250;
  double alpha = 0.005;
  std::uint64_t seed = 1;
  FcrMode mode = FcrMode::co_optimize;
  double fixed_r = 0.0;
};

/// Upper part: the candidate's first stage (reserve, policy, envelope) fixed,
/// objective evaluated on n_u fresh profiles. Lower part: optima of n_l SAA
/// problems with n_sc fresh profiles each. Stream 0 of the seed feeds the
/// upper part and stream 1 + i the i-th SAA problem.
GapEstimate estimate_gap(const UncertaintyModel& model, const BatteryConfig& cfg, const TimeGrid& grid,
                         const PriceSet& prices, const CoOptSolution& candidate, const ProfileSource& source,
                         const GapSettings& settings, ConicSolver& solver);

/// Source backed by synth_profiles.
ProfileSource synthetic_source(ProfileKind kind, const ProfileParams& params);

std::string gap_json(const GapEstimate& gap);

}  // namespace coopt
