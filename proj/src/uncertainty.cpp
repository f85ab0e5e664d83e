#include "coopt/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Cholesky>

#include "coopt/io.hpp"
#include "coopt/kernels.hpp"

namespace coopt {

double UncertaintyModel::omega() const { return std::sqrt(-2.0 * std::log(epsilon)); }

Eigen::VectorXd UncertaintyModel::whiten(const Eigen::VectorXd& df) const {
  return w_inv.triangularView<Eigen::Lower>().solve(df - mean);
}

Eigen::VectorXd UncertaintyModel::unwhiten(const Eigen::VectorXd& f) const {
  return mean + w_inv.triangularView<Eigen::Lower>() * f;
}

Eigen::VectorXd UncertaintyModel::direction(const Eigen::VectorXd& a) const {
  return w_inv.transpose() * a;
}

namespace {

// 2 ln m(theta) / theta^2 with m the empirical MGF, evaluated with a shift so
// the exponentials cannot overflow.
double mgf_objective(std::span<const double> x, double x_max, double theta) {
  const double s = kernels::sum_exp(x, theta, theta * x_max);
  const double log_m = theta * x_max + std::log(s / static_cast<double>(x.size()));
  return 2.0 * log_m / (theta * theta);
}

double deviation(std::span<const double> x) {
  if (x.empty()) throw EmptySample("deviation of an empty sample");
  const double x_max = *std::max_element(x.begin(), x.end());
  double m1 = 0.0;
  double m2 = 0.0;
  for (double v : x) {
    m1 += v;
    m2 += v * v;
  }
  m1 /= static_cast<double>(x.size());
  m2 /= static_cast<double>(x.size());

  // theta -> 0: 2 ln m / theta^2 ~ 2 m1 / theta + m2, finite only for zero mean.
  double best = std::abs(m1) < 1e-12 ? m2 : 0.0;

  constexpr int kGrid = 60;
  const double lo = std::log(1e-3);
  const double hi = std::log(1e2);
  std::vector<double> values(kGrid);
  int arg = -1;
  double grid_best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < kGrid; ++i) {
    const double theta = std::exp(lo + (hi - lo) * i / (kGrid - 1));
    const double v = mgf_objective(x, x_max, theta);
    values[i] = v;
    if (std::isfinite(v) && v > grid_best) {
      grid_best = v;
      arg = i;
    }
  }
  if (arg >= 0) {
    best = std::max(best, grid_best);
    // Golden-section refinement in log theta over the bracket around the best point.
    double a = lo + (hi - lo) * std::max(arg - 1, 0) / (kGrid - 1);
    double b = lo + (hi - lo) * std::min(arg + 1, kGrid - 1) / (kGrid - 1);
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    auto f = [&](double log_theta) { return mgf_objective(x, x_max, std::exp(log_theta)); };
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c);
    double fd = f(d);
    for (int it = 0; it < 60 && b - a > 1e-10; ++it) {
      if (fc > fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - inv_phi * (b - a);
        fc = f(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + inv_phi * (b - a);
        fd = f(d);
      }
    }
    for (double v : {fc, fd}) {
      if (std::isfinite(v)) best = std::max(best, v);
    }
  }
  return std::sqrt(std::max(best, 0.0));
}

}  // namespace

double forward_deviation(std::span<const double> x) { return deviation(x); }

double backward_deviation(std::span<const double> x) {
  std::vector<double> neg(x.size());
  std::transform(x.begin(), x.end(), neg.begin(), std::negate<>());
  return deviation(neg);
}

UncertaintyModel fit_uncertainty(const Eigen::MatrixXd& train, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ValidationError("epsilon must lie in (0, 1)");
  const Eigen::Index n = train.rows();
  const Eigen::Index n_t = train.cols();
  if (n_t < 1) throw ValidationError("training matrix has no columns");
  if (n < n_t + 1) {
    throw ValidationError("need at least n_t + 1 = " + std::to_string(n_t + 1) + " training rows, got " +
                          std::to_string(n));
  }
  if (!train.allFinite()) throw ValidationError("training matrix contains non-finite values");

  UncertaintyModel model;
  model.epsilon = epsilon;
  model.mean = train.colwise().mean().transpose();
  const Eigen::MatrixXd centered = train.rowwise() - model.mean.transpose();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);
  const double delta = 1e-8 * cov.trace() / static_cast<double>(n_t);
  cov.diagonal().array() += delta;

  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success || !(delta > 0.0)) {
    throw SingularCovariance("regularized covariance is not positive definite");
  }
  model.w_inv = llt.matrixL();
  model.w = model.w_inv.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n_t, n_t));

  // Whitened sample, one column per coordinate (contiguous for the MGF sums).
  const Eigen::MatrixXd whitened =
      model.w_inv.triangularView<Eigen::Lower>().solve(centered.transpose()).transpose();
  model.sigma_f.resize(n_t);
  model.sigma_b.resize(n_t);
  for (Eigen::Index i = 0; i < n_t; ++i) {
    Eigen::VectorXd col = whitened.col(i);
    // Re-center exactly: whitening is linear so the mean is zero up to rounding.
    col.array() -= col.mean();
    const double spread = col.cwiseAbs().maxCoeff();
    if (!(spread > 1e-9)) {
      throw DegenerateCoordinate("whitened coordinate " + std::to_string(i) + " is constant");
    }
    const std::span<const double> x(col.data(), static_cast<std::size_t>(col.size()));
    model.sigma_f[i] = forward_deviation(x);
    model.sigma_b[i] = backward_deviation(x);
  }
  model.training_hash = io::sha256_matrix(train);
  return model;
}

double worst_case(const UncertaintyModel& model, const Eigen::VectorXd& a) {
  if (a.size() != model.n_t()) throw ValidationError("direction length does not match the model");
  const Eigen::VectorXd c = model.direction(a);
  const Eigen::VectorXd u = (model.sigma_f.array() * c.array()).max(-model.sigma_b.array() * c.array());
  return a.dot(model.mean) + model.omega() * u.norm();
}

double empirical_cvar(std::span<const double> samples, double epsilon, bool* undersampled) {
  if (samples.empty()) throw EmptySample("CVaR of an empty sample");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ValidationError("epsilon must lie in (0, 1)");
  const auto n = static_cast<double>(samples.size());
  if (undersampled != nullptr) *undersampled = n < 1.0 / epsilon;
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  // Tail mass epsilon * n spread over the largest order statistics.
  const double mass = epsilon * n;
  double acc = 0.0;
  double remaining = mass;
  for (double v : sorted) {
    const double take = std::min(1.0, remaining);
    acc += take * v;
    remaining -= take;
    if (remaining <= 0.0) break;
  }
  return acc / mass;
}

}  // namespace coopt
