#include "coopt/conic.hpp"

#include <cstdlib>
#include <numeric>
#include <sstream>

#include "coopt/errors.hpp"
#include "coopt/io.hpp"

namespace coopt {

std::unique_ptr<ConicSolver> make_ipm_solver();

void ConicProgram::validate() const {
  if (c.size() != n || A.cols() != n || G.cols() != n) throw ValidationError("program dimensions disagree");
  if (b.size() != A.rows() || h.size() != G.rows()) throw ValidationError("right-hand sides disagree with matrices");
  const int cone_rows = n_nonneg + std::accumulate(soc_dims.begin(), soc_dims.end(), 0);
  if (cone_rows != G.rows()) throw ValidationError("cone dimensions do not cover G");
  for (int q : soc_dims) {
    if (q < 1) throw ValidationError("second-order cone of dimension < 1");
  }
}

std::string_view to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::optimal:
      return "optimal";
    case SolveStatus::primal_infeasible:
      return "infeasible";
    case SolveStatus::dual_infeasible:
      return "unbounded";
    case SolveStatus::max_iterations:
      return "max_iterations";
    case SolveStatus::numerical_trouble:
      return "numerical_trouble";
  }
  return "unknown";
}

std::unique_ptr<ConicSolver> make_solver(std::string_view name) {
  std::string chosen(name);
  if (chosen.empty()) {
    const char* env = std::getenv("COOPT_SOLVER");
    chosen = env != nullptr && *env != '\0' ? env : "ipm";
  }
  if (chosen == "ipm") return make_ipm_solver();
  throw ValidationError("unknown solver: " + chosen);
}

std::string to_cbf(const ConicProgram& p) {
  p.validate();
  std::ostringstream out;
  out << "VER\n3\n\nOBJSENSE\nMIN\n\nVAR\n" << p.n << " 1\nF " << p.n << "\n\n";
  const int m = p.n_eq() + p.n_cone_rows();
  int blocks = (p.n_eq() > 0) + (p.n_nonneg > 0) + static_cast<int>(p.soc_dims.size());
  out << "CON\n" << m << ' ' << blocks << '\n';
  if (p.n_eq() > 0) out << "L= " << p.n_eq() << '\n';
  if (p.n_nonneg > 0) out << "L+ " << p.n_nonneg << '\n';
  for (int q : p.soc_dims) out << "Q " << q << '\n';
  out << '\n';

  int nnz_c = 0;
  for (int j = 0; j < p.n; ++j) nnz_c += p.c[j] != 0.0;
  out << "OBJACOORD\n" << nnz_c << '\n';
  for (int j = 0; j < p.n; ++j) {
    if (p.c[j] != 0.0) out << j << ' ' << io::format_double(p.c[j]) << '\n';
  }
  out << "\nOBJBCOORD\n" << io::format_double(p.c0) << "\n\n";

  // Rows: A x - b in {0}, then h - G x in K.
  std::vector<std::string> lines;
  for (int j = 0; j < p.n; ++j) {
    for (SparseMatrix::InnerIterator it(p.A, j); it; ++it) {
      lines.push_back(std::to_string(it.row()) + ' ' + std::to_string(j) + ' ' + io::format_double(it.value()));
    }
    for (SparseMatrix::InnerIterator it(p.G, j); it; ++it) {
      lines.push_back(std::to_string(p.n_eq() + it.row()) + ' ' + std::to_string(j) + ' ' +
                      io::format_double(-it.value()));
    }
  }
  out << "ACOORD\n" << lines.size() << '\n';
  for (const auto& l : lines) out << l << '\n';
  lines.clear();
  for (int i = 0; i < p.n_eq(); ++i) {
    if (p.b[i] != 0.0) lines.push_back(std::to_string(i) + ' ' + io::format_double(-p.b[i]));
  }
  for (int i = 0; i < p.n_cone_rows(); ++i) {
    if (p.h[i] != 0.0) lines.push_back(std::to_string(p.n_eq() + i) + ' ' + io::format_double(p.h[i]));
  }
  out << "\nBCOORD\n" << lines.size() << '\n';
  for (const auto& l : lines) out << l << '\n';
  return out.str();
}

int ProgramBuilder::add_variables(int count) {
  const int first = n_;
  n_ += count;
  return first;
}

void ProgramBuilder::add_cost(int var, double coef) { cost_.emplace_back(var, coef); }

void ProgramBuilder::add_equality(const LinExpr& e) {
  const int row = static_cast<int>(eq_rhs_.size());
  for (const auto& [v, a] : e.terms) eq_.emplace_back(row, v, a);
  eq_rhs_.push_back(-e.constant);
}

void ProgramBuilder::add_nonneg(const LinExpr& e) {
  const int row = static_cast<int>(lp_h_.size());
  for (const auto& [v, a] : e.terms) lp_.emplace_back(row, v, -a);
  lp_h_.push_back(e.constant);
}

void ProgramBuilder::add_lower_bound(int var, double lb) { add_nonneg(LinExpr(-lb).add(var, 1.0)); }

void ProgramBuilder::add_upper_bound(int var, double ub) { add_nonneg(LinExpr(ub).add(var, -1.0)); }

void ProgramBuilder::add_soc(const std::vector<LinExpr>& e) {
  if (e.empty()) throw ValidationError("empty second-order cone");
  for (const auto& expr : e) {
    const int row = static_cast<int>(soc_h_.size());
    for (const auto& [v, a] : expr.terms) soc_.emplace_back(row, v, -a);
    soc_h_.push_back(expr.constant);
  }
  soc_dims_.push_back(static_cast<int>(e.size()));
}

ConicProgram ProgramBuilder::build() const {
  ConicProgram p;
  p.n = n_;
  p.c = Eigen::VectorXd::Zero(n_);
  for (const auto& [v, a] : cost_) p.c[v] += a;
  p.c0 = c0_;

  p.A.resize(static_cast<int>(eq_rhs_.size()), n_);
  p.A.setFromTriplets(eq_.begin(), eq_.end());
  p.b = Eigen::Map<const Eigen::VectorXd>(eq_rhs_.data(), static_cast<Eigen::Index>(eq_rhs_.size()));

  const int l = static_cast<int>(lp_h_.size());
  const int q = static_cast<int>(soc_h_.size());
  std::vector<Triplet> g(lp_);
  g.reserve(lp_.size() + soc_.size());
  for (const auto& t : soc_) g.emplace_back(t.row() + l, t.col(), t.value());
  p.G.resize(l + q, n_);
  p.G.setFromTriplets(g.begin(), g.end());
  p.h.resize(l + q);
  for (int i = 0; i < l; ++i) p.h[i] = lp_h_[i];
  for (int i = 0; i < q; ++i) p.h[l + i] = soc_h_[i];
  p.n_nonneg = l;
  p.soc_dims = soc_dims_;
  p.A.makeCompressed();
  p.G.makeCompressed();
  return p;
}

}  // namespace coopt
