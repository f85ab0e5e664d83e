#include "coopt/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "json.hpp"

#include "coopt/errors.hpp"
#include "coopt/io.hpp"
#include "coopt/kernels.hpp"
#include "coopt/rng.hpp"

namespace coopt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) { return Rng(seed, stream).next(); }

}  // namespace

Eigen::MatrixXd profile_distances(const Eigen::MatrixXd& profiles) {
  const int n = static_cast<int>(profiles.rows());
  const int m = static_cast<int>(profiles.cols());
  // Row-major copy so each profile is contiguous for the kernel.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = profiles;
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double v = std::sqrt(kernels::squared_distance({rows.row(i).data(), static_cast<std::size_t>(m)},
                                                           {rows.row(j).data(), static_cast<std::size_t>(m)}));
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

double kantorovich_distance(const ProfileScenarioSet& set, const std::vector<int>& kept) {
  set.validate();
  if (kept.empty()) throw ValidationError("the reduced set must keep at least one scenario");
  const Eigen::MatrixXd d = profile_distances(set.profiles);
  std::vector<char> is_kept(set.size(), 0);
  for (int k : kept) {
    if (k < 0 || k >= set.size()) throw ValidationError("kept index out of range");
    is_kept[k] = 1;
  }
  double total = 0.0;
  for (int i = 0; i < set.size(); ++i) {
    if (is_kept[i]) continue;
    double best = kInf;
    for (int k : kept) best = std::min(best, d(i, k));
    total += set.weights(i) * best;
  }
  return total;
}

Reduction reduce_backward_detail(const ProfileScenarioSet& set, int target_n) {
  set.validate();
  const int n = set.size();
  if (target_n < 1 || target_n > n) throw ValidationError("target scenario count must be in [1, n_sc]");

  Reduction out;
  if (target_n == n) {
    out.kept.resize(n);
    std::iota(out.kept.begin(), out.kept.end(), 0);
    out.assigned = out.kept;
    out.reduced = set;
    return out;
  }

  const Eigen::MatrixXd d = profile_distances(set.profiles);
  const Eigen::VectorXd& p = set.weights;
  std::vector<char> alive(n, 1);
  // Nearest and second nearest surviving scenario other than the scenario itself.
  std::vector<int> nn1(n, -1), nn2(n, -1);
  std::vector<double> d1(n, kInf), d2(n, kInf);
  auto refresh = [&](int k) {
    nn1[k] = nn2[k] = -1;
    d1[k] = d2[k] = kInf;
    for (int j = 0; j < n; ++j) {
      if (!alive[j] || j == k) continue;
      const double v = d(k, j);
      if (v < d1[k]) {
        nn2[k] = nn1[k];
        d2[k] = d1[k];
        nn1[k] = j;
        d1[k] = v;
      } else if (v < d2[k]) {
        nn2[k] = j;
        d2[k] = v;
      }
    }
  };
  for (int k = 0; k < n; ++k) refresh(k);

  // Removing survivor l adds p_l * d1[l] and moves every removed scenario
  // currently served by l to its second nearest survivor.
  std::vector<double> extra(n);
  for (int remaining = n; remaining > target_n; --remaining) {
    std::fill(extra.begin(), extra.end(), 0.0);
    for (int k = 0; k < n; ++k) {
      if (!alive[k]) extra[nn1[k]] += p(k) * (d2[k] - d1[k]);
    }
    int best = -1;
    double best_inc = kInf;
    for (int l = 0; l < n; ++l) {
      if (!alive[l]) continue;
      const double inc = p(l) * d1[l] + extra[l];
      if (inc < best_inc) {
        best_inc = inc;
        best = l;
      }
    }
    if (best < 0) break;  // only with non-finite distances
    alive[best] = 0;
    for (int k = 0; k < n; ++k) {
      if (k == best || nn1[k] == best || nn2[k] == best) refresh(k);
    }
  }

  out.assigned.resize(n);
  for (int k = 0; k < n; ++k) {
    if (alive[k]) {
      out.kept.push_back(k);
      out.assigned[k] = k;
    } else {
      out.assigned[k] = nn1[k];
      out.distance += p(k) * d1[k];
    }
  }
  const int m = static_cast<int>(out.kept.size());
  std::vector<int> slot(n, -1);
  for (int i = 0; i < m; ++i) slot[out.kept[i]] = i;
  out.reduced.profiles.resize(m, set.n_t());
  out.reduced.weights = Eigen::VectorXd::Zero(m);
  for (int i = 0; i < m; ++i) out.reduced.profiles.row(i) = set.profiles.row(out.kept[i]);
  for (int k = 0; k < n; ++k) out.reduced.weights(slot[out.assigned[k]]) += p(k);
  return out;
}

ProfileScenarioSet reduce_backward(const ProfileScenarioSet& set, int target_n) {
  return reduce_backward_detail(set, target_n).reduced;
}

// ---- synthetic profiles ----

ProfileKind parse_profile_kind(std::string_view s) {
  if (s == "household") return ProfileKind::household;
  if (s == "pv") return ProfileKind::pv;
  if (s == "net") return ProfileKind::net;
  throw ValidationError("unknown profile kind '" + std::string(s) + "' (household, pv, net)");
}

std::string_view to_string(ProfileKind kind) {
  switch (kind) {
    case ProfileKind::household:
      return "household";
    case ProfileKind::pv:
      return "pv";
    case ProfileKind::net:
      return "net";
  }
  return "unknown";
}

void ProfileParams::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw ValidationError(msg);
  };
  require(n_t >= 1, "profile length must be positive");
  require(base_kw >= 0.0 && morning_kw >= 0.0 && evening_kw >= 0.0, "demand levels must be nonnegative");
  require(morning_width_h > 0.0 && evening_width_h > 0.0, "demand peak widths must be positive");
  require(demand_noise >= 0.0 && pv_noise >= 0.0, "noise levels must be nonnegative");
  require(pv_kwp >= 0.0 && peak_fraction >= 0.0 && peak_fraction <= 1.0, "bad PV size");
  require(sunrise_hour < sunset_hour && sunrise_hour >= 0.0 && sunset_hour <= 24.0, "bad daylight window");
  require(cloudiness >= 0.0 && cloudiness <= 1.0, "cloudiness must be in [0, 1]");
}

ProfileParams ProfileParams::noiseless() const {
  ProfileParams q = *this;
  q.demand_noise = 0.0;
  q.pv_noise = 0.0;
  q.cloudiness = 0.0;
  return q;
}

std::vector<bool> daylight_steps(const ProfileParams& params) {
  std::vector<bool> out(params.n_t);
  for (int k = 0; k < params.n_t; ++k) {
    const double hour = (k + 0.5) * 24.0 / params.n_t;
    out[k] = hour > params.sunrise_hour && hour < params.sunset_hour;
  }
  return out;
}

namespace {

double bump(double hour, double centre, double width) {
  const double z = (hour - centre) / width;
  return std::exp(-0.5 * z * z);
}

// Multiplicative noise with mean 1.
double lognormal(Rng& rng, double sigma) {
  if (sigma == 0.0) return 1.0;
  return std::exp(sigma * rng.normal() - 0.5 * sigma * sigma);
}

Eigen::VectorXd draw_household(const ProfileParams& q, Rng& rng) {
  Eigen::VectorXd out(q.n_t);
  for (int k = 0; k < q.n_t; ++k) {
    const double hour = (k + 0.5) * 24.0 / q.n_t;
    const double shape = q.base_kw + q.morning_kw * bump(hour, q.morning_hour, q.morning_width_h) +
                         q.evening_kw * bump(hour, q.evening_hour, q.evening_width_h);
    out(k) = shape * lognormal(rng, q.demand_noise);
  }
  return out;
}

Eigen::VectorXd draw_pv(const ProfileParams& q, Rng& rng) {
  const double index = q.cloudiness > 0.0 ? 1.0 - q.cloudiness * rng.uniform() : 1.0;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(q.n_t);
  const auto day = daylight_steps(q);
  for (int k = 0; k < q.n_t; ++k) {
    if (!day[k]) continue;
    const double hour = (k + 0.5) * 24.0 / q.n_t;
    const double phase = (hour - q.sunrise_hour) / (q.sunset_hour - q.sunrise_hour);
    const double clear = q.pv_kwp * q.peak_fraction * std::sin(std::numbers::pi * phase);
    out(k) = std::min(q.pv_kwp, clear * index * lognormal(rng, q.pv_noise));
  }
  return out;
}

}  // namespace

ProfileScenarioSet synth_profiles(ProfileKind kind, const ProfileParams& params, int n, std::uint64_t seed) {
  params.validate();
  if (n < 0) throw ValidationError("scenario count must be nonnegative");
  Eigen::MatrixXd rows(n, params.n_t);
  for (int j = 0; j < n; ++j) {
    Rng rng(seed, static_cast<std::uint64_t>(j));
    switch (kind) {
      case ProfileKind::household:
        rows.row(j) = draw_household(params, rng).transpose();
        break;
      case ProfileKind::pv:
        rows.row(j) = draw_pv(params, rng).transpose();
        break;
      case ProfileKind::net: {
        const Eigen::VectorXd demand = draw_household(params, rng);
        rows.row(j) = (demand - draw_pv(params, rng)).transpose();
        break;
      }
    }
  }
  return ProfileScenarioSet::uniform(std::move(rows));
}

// ---- files ----

ProfileScenarioSet read_scenarios_csv(const std::filesystem::path& path) {
  const io::CsvMatrix csv = io::read_csv_matrix(path);
  ProfileScenarioSet set;
  const bool weighted = !csv.header.empty() && io::trim(csv.header.front()) == "weight";
  if (weighted) {
    if (csv.values.cols() < 2) throw ValidationError(path.string() + ": weight column without profile values");
    set.weights = csv.values.col(0);
    set.profiles = csv.values.rightCols(csv.values.cols() - 1);
    const double total = set.weights.sum();
    if (total > 0.0 && std::abs(total - 1.0) <= 1e-9) set.weights /= total;
  } else {
    set = ProfileScenarioSet::uniform(csv.values);
  }
  set.validate();
  return set;
}

namespace {

std::vector<std::string> scenario_header(int n_t) {
  std::vector<std::string> header{"weight"};
  for (int k = 0; k < n_t; ++k) header.push_back("p" + std::to_string(k));
  return header;
}

Eigen::MatrixXd scenario_table(const ProfileScenarioSet& set) {
  Eigen::MatrixXd m(set.size(), set.n_t() + 1);
  if (set.size() > 0) {
    m.col(0) = set.weights;
    m.rightCols(set.n_t()) = set.profiles;
  }
  return m;
}

}  // namespace

void write_scenarios_csv(const std::filesystem::path& path, const ProfileScenarioSet& set) {
  set.validate();
  io::write_csv_matrix(path, scenario_table(set), scenario_header(set.n_t()));
}

std::string scenarios_csv_string(const ProfileScenarioSet& set) {
  set.validate();
  return io::csv_matrix_string(scenario_table(set), scenario_header(set.n_t()));
}

// ---- optimality gap ----

double GapEstimate::relative_gap() const {
  const double scale = std::abs(upper_mean);
  return scale > 0.0 ? gap / scale : (gap == 0.0 ? 0.0 : kInf);
}

double normal_upper_quantile(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must be in (0, 1)");
  return boost::math::quantile(boost::math::complement(boost::math::normal_distribution<>(), alpha));
}

double student_t_upper_quantile(double alpha, int dof) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must be in (0, 1)");
  if (dof < 1) throw ValidationError("Student-t needs at least one degree of freedom");
  return boost::math::quantile(
      boost::math::complement(boost::math::students_t_distribution<>(static_cast<double>(dof)), alpha));
}

namespace {

double sample_std(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  const double mean = v.mean();
  return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size() - 1));
}

}  // namespace

GapEstimate gap_from_samples(const Eigen::VectorXd& upper, const Eigen::VectorXd& lower, double alpha, int n_sc) {
  if (upper.size() < 1) throw EmptySample("the upper bound needs at least one evaluation");
  if (lower.size() < 2) throw EmptySample("the lower bound needs at least two SAA problems");
  GapEstimate g;
  g.alpha = alpha;
  g.n_u = static_cast<int>(upper.size());
  g.n_l = static_cast<int>(lower.size());
  g.n_sc = n_sc;
  g.upper_mean = upper.mean();
  g.lower_mean = lower.mean();
  g.sigma_u = sample_std(upper);
  g.sigma_l = sample_std(lower);
  g.z_alpha = normal_upper_quantile(alpha);
  g.t_alpha = student_t_upper_quantile(alpha, g.n_l - 1);
  g.gap = g.upper_mean - g.lower_mean + g.z_alpha * g.sigma_u / std::sqrt(static_cast<double>(g.n_u)) +
          g.t_alpha * g.sigma_l / std::sqrt(static_cast<double>(g.n_l));
  g.lower_values.assign(lower.data(), lower.data() + lower.size());
  return g;
}

GapEstimate estimate_gap(const UncertaintyModel& model, const BatteryConfig& cfg, const TimeGrid& grid,
                         const PriceSet& prices, const CoOptSolution& candidate, const ProfileSource& source,
                         const GapSettings& settings, ConicSolver& solver) {
  if (settings.n_u < 1 || settings.n_l < 2 || settings.n_sc < 1) {
    throw ValidationError("gap estimation needs n_U >= 1, n_L >= 2 and n_sc >= 1");
  }
  if (!candidate.feasible() || candidate.envelope.n_t() != grid.n_t) {
    throw ValidationError("the candidate must be an optimal combined solution on this grid");
  }

  const Eigen::MatrixXd fresh = source(settings.n_u, stream_seed(settings.seed, 0));
  const Eigen::VectorXd upper =
      evaluate_recourse(candidate.envelope, cfg, grid, prices, fresh, solver).array() - candidate.fcr_revenue;

  Eigen::VectorXd lower(settings.n_l);
  for (int i = 0; i < settings.n_l; ++i) {
    const auto sample = ProfileScenarioSet::uniform(source(settings.n_sc, stream_seed(settings.seed, 1 + i)));
    const CoOptProblem saa =
        build_combined_problem(model, cfg, grid, prices, sample, settings.mode, settings.fixed_r);
    const CoOptSolution sol = solve(saa, solver);
    if (!sol.feasible()) throw SolverFailure("SAA problem reported infeasible", sol.solver_log);
    lower(i) = sol.objective;
  }
  return gap_from_samples(upper, lower, settings.alpha, settings.n_sc);
}

ProfileSource synthetic_source(ProfileKind kind, const ProfileParams& params) {
  return [kind, params](int n, std::uint64_t seed) { return synth_profiles(kind, params, n, seed).profiles; };
}

std::string gap_json(const GapEstimate& gap) {
  nlohmann::ordered_json j;
  j["upper_mean"] = gap.upper_mean;
  j["lower_mean"] = gap.lower_mean;
  j["gap"] = gap.gap;
  j["relative_gap"] = gap.relative_gap();
  j["alpha"] = gap.alpha;
  j["n_U"] = gap.n_u;
  j["n_L"] = gap.n_l;
  j["n_sc"] = gap.n_sc;
  j["sigma_U"] = gap.sigma_u;
  j["sigma_L"] = gap.sigma_l;
  j["z_alpha"] = gap.z_alpha;
  j["t_alpha"] = gap.t_alpha;
  j["lower_values"] = gap.lower_values;
  return j.dump(2) + "\n";
}

}  // namespace coopt
