#pragma once

// Linear + second-order-cone programs in the standard form
//
//   minimize    c'x + c0
//   subject to  A x = b
//               G x + s = h,   s in R+^l x Q^{q1} x ... x Q^{qk}
//
// with Q^q = {(t, v) : t >= ||v||_2}. Solvers implement ConicSolver.

#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace coopt {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

struct ConicProgram {
  int n = 0;
  Eigen::VectorXd c;
  double c0 = 0.0;
  SparseMatrix A;
  Eigen::VectorXd b;
  SparseMatrix G;
  Eigen::VectorXd h;
  int n_nonneg = 0;
  std::vector<int> soc_dims;

  int n_eq() const { return static_cast<int>(A.rows()); }
  int n_cone_rows() const { return static_cast<int>(G.rows()); }
  void validate() const;
};

enum class SolveStatus { optimal, primal_infeasible, dual_infeasible, max_iterations, numerical_trouble };

std::string_view to_string(SolveStatus status);

struct SolverSettings {
  double feastol = 1e-8;
  double abstol = 1e-8;
  double reltol = 1e-8;
  // Fallback tolerances accepted (flagged as reduced accuracy) when progress stalls.
  double feastol_inaccurate = 1e-5;
  double reltol_inaccurate = 1e-5;
  int max_iterations = 100;
  bool verbose = false;
};

struct ConicSolution {
  SolveStatus status = SolveStatus::numerical_trouble;
  bool reduced_accuracy = false;
  Eigen::VectorXd x;
  Eigen::VectorXd y;  // equality multipliers
  Eigen::VectorXd z;  // cone multipliers
  Eigen::VectorXd s;  // cone slacks
  double primal_objective = 0.0;  // includes c0
  double dual_objective = 0.0;
  double primal_residual = 0.0;  // relative
  double dual_residual = 0.0;    // relative
  double gap = 0.0;
  int iterations = 0;
  std::string log;
};

class ConicSolver {
 public:
  virtual ~ConicSolver() = default;
  virtual std::string_view name() const = 0;
  virtual ConicSolution solve(const ConicProgram& program, const SolverSettings& settings) = 0;
  ConicSolution solve(const ConicProgram& program) { return solve(program, SolverSettings{}); }
};

/// Solver by name; an empty name reads COOPT_SOLVER and defaults to "ipm".
std::unique_ptr<ConicSolver> make_solver(std::string_view name = {});

/// Conic Benchmark Format text (CBF version 3) for cross-checking elsewhere.
std::string to_cbf(const ConicProgram& program);

/// Sparse affine expression sum_i coef_i x_{var_i} + constant.
struct LinExpr {
  std::vector<std::pair<int, double>> terms;
  double constant = 0.0;

  LinExpr() = default;
  explicit LinExpr(double c) : constant(c) {}
  LinExpr& add(int var, double coef) {
    if (coef != 0.0) terms.emplace_back(var, coef);
    return *this;
  }
  LinExpr& operator+=(double c) {
    constant += c;
    return *this;
  }
};

class ProgramBuilder {
 public:
  /// Index of the first of count new free variables.
  int add_variables(int count);
  int add_variable() { return add_variables(1); }
  int num_variables() const { return n_; }

  void add_cost(int var, double coef);
  void add_cost_constant(double c) { c0_ += c; }

  void add_equality(const LinExpr& e);  // e == 0
  void add_nonneg(const LinExpr& e);    // e >= 0
  void add_lower_bound(int var, double lb);
  void add_upper_bound(int var, double ub);
  /// e[0] >= ||(e[1], ..., e[q-1])||_2
  void add_soc(const std::vector<LinExpr>& e);

  ConicProgram build() const;

 private:
  using Triplet = Eigen::Triplet<double, int>;
  int n_ = 0;
  std::vector<std::pair<int, double>> cost_;
  double c0_ = 0.0;
  std::vector<Triplet> eq_;
  std::vector<double> eq_rhs_;
  std::vector<Triplet> lp_;
  std::vector<double> lp_h_;
  std::vector<Triplet> soc_;
  std::vector<double> soc_h_;
  std::vector<int> soc_dims_;
};

}  // namespace coopt
