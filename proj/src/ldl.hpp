#pragma once

// Sparse LDL' for quasi-definite matrices with known pivot signs. Pivots that
// come out too small or with the wrong sign are replaced by sign * delta,
// which keeps the factorization usable when the interior-point scaling gets
// ill-conditioned; callers correct the perturbation by iterative refinement.

#include <vector>

#include <Eigen/Core>

#include "coopt/conic.hpp"

namespace coopt::detail {

class QuasiDefiniteLdl {
 public:
  /// upper: upper triangle (with diagonal) of the symmetric matrix.
  /// signs: +1 or -1 per row, the expected sign of each pivot.
  void analyze(const SparseMatrix& upper, const std::vector<int>& signs);
  /// Numeric factorization for a matrix with the analyzed pattern. Returns
  /// the number of pivots that had to be regularized.
  int factorize(const SparseMatrix& upper, double eps = 1e-13, double delta = 7e-8);
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;

  long factor_nonzeros() const { return static_cast<long>(li_.size()); }
  bool analyzed() const { return n_ > 0; }

 private:
  int n_ = 0;
  std::vector<int> perm_;      // new index -> old index
  std::vector<int> value_map_; // position in the permuted upper matrix for each input value
  std::vector<int> ap_, ai_;   // permuted upper pattern
  std::vector<double> ax_;
  std::vector<int> sign_;      // per permuted index
  std::vector<int> etree_, lnz_, lp_, li_;
  std::vector<double> lx_, d_, dinv_;
};

}  // namespace coopt::detail
