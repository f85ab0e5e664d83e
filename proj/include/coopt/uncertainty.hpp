#pragma once

// Data-driven uncertainty set for the per-step frequency deviations: sample
// mean, a whitening transform, and forward/backward deviations of each
// whitened coordinate.

#include <span>
#include <string>

#include <Eigen/Core>

#include "coopt/errors.hpp"

namespace coopt {

class SingularCovariance : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DegenerateCoordinate : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EmptySample : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct UncertaintyModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd w;      // whitening: f~ = w (df - mean)
  Eigen::MatrixXd w_inv;  // lower triangular Cholesky factor of the covariance
  Eigen::VectorXd sigma_f;
  Eigen::VectorXd sigma_b;
  double epsilon = 1e-4;
  std::string training_hash;

  int n_t() const { return static_cast<int>(mean.size()); }
  // sqrt(-2 ln epsilon)
  double omega() const;

  Eigen::VectorXd whiten(const Eigen::VectorXd& df) const;
  Eigen::VectorXd unwhiten(const Eigen::VectorXd& f) const;
  // Coordinates of a in whitened space: a' df = a' mean + c' f~.
  Eigen::VectorXd direction(const Eigen::VectorXd& a) const;
};

/// Rows of train are days, columns are steps. Covariance uses the 1/n
/// normalization, regularized by 1e-8 * trace / n_t on the diagonal.
UncertaintyModel fit_uncertainty(const Eigen::MatrixXd& train, double epsilon);

/// sup over theta > 0 of sqrt(2 ln E[exp(theta x)] / theta^2) on the empirical
/// distribution of x (forward); backward uses -x.
double forward_deviation(std::span<const double> x);
double backward_deviation(std::span<const double> x);

/// max over the uncertainty set of a' df.
double worst_case(const UncertaintyModel& model, const Eigen::VectorXd& a);

/// Sample CVaR at level 1 - epsilon (mean of the upper epsilon tail with a
/// fractional weight on the boundary order statistic). undersampled, when
/// given, is set if the sample has fewer than 1/epsilon points.
double empirical_cvar(std::span<const double> samples, double epsilon, bool* undersampled = nullptr);

}  // namespace coopt
