// Primal-dual interior-point method on the homogeneous self-dual embedding,
// with Nesterov-Todd scaling and Mehrotra predictor-corrector steps. The
// quasi-definite KKT system is factored with a sparse LDL' (static
// regularization plus iterative refinement against the exact matrix).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <sstream>
#include <vector>

#include "coopt/conic.hpp"
#include "coopt/errors.hpp"
#include "ldl.hpp"

namespace coopt {

namespace {

using Vec = Eigen::VectorXd;

struct Cones {
  int l = 0;
  std::vector<int> q;
  std::vector<int> off;  // start row of each second-order cone
  int m = 0;
  int degree = 0;

  explicit Cones(const ConicProgram& p) : l(p.n_nonneg), q(p.soc_dims) {
    int pos = l;
    for (int d : q) {
      off.push_back(pos);
      pos += d;
    }
    m = pos;
    degree = l + static_cast<int>(q.size());
  }
};

double soc_tail_norm(const double* x, int d) {
  double acc = 0.0;
  for (int i = 1; i < d; ++i) acc += x[i] * x[i];
  return std::sqrt(acc);
}

// sqrt(x0^2 - |x1|^2), negative inputs clipped to 0.
double soc_det_root(const double* x, int d) {
  const double t = soc_tail_norm(x, d);
  const double v = (x[0] - t) * (x[0] + t);
  return v > 0.0 ? std::sqrt(v) : 0.0;
}

struct Scaling {
  Vec lp_w;                  // sqrt(s / z)
  std::vector<double> eta;   // per second-order cone
  Vec wbar;                  // stacked normalized scaling points (cone rows)
  Vec lambda;                // W z = W^{-1} s
};

bool update_scaling(const Cones& k, const Vec& s, const Vec& z, Scaling& w) {
  w.lp_w.resize(k.l);
  for (int i = 0; i < k.l; ++i) {
    if (!(s[i] > 0.0 && z[i] > 0.0)) return false;
    w.lp_w[i] = std::sqrt(s[i] / z[i]);
  }
  w.eta.resize(k.q.size());
  w.wbar.resize(k.m);
  for (std::size_t c = 0; c < k.q.size(); ++c) {
    const int o = k.off[c];
    const int d = k.q[c];
    const double sr = soc_det_root(s.data() + o, d);
    const double zr = soc_det_root(z.data() + o, d);
    if (!(sr > 0.0 && zr > 0.0)) return false;
    double dot = 0.0;
    for (int i = 0; i < d; ++i) dot += (s[o + i] / sr) * (z[o + i] / zr);
    const double gamma = std::sqrt((1.0 + dot) / 2.0);
    w.wbar[o] = (s[o] / sr + z[o] / zr) / (2.0 * gamma);
    for (int i = 1; i < d; ++i) w.wbar[o + i] = (s[o + i] / sr - z[o + i] / zr) / (2.0 * gamma);
    w.eta[c] = std::sqrt(sr / zr);
  }
  return true;
}

// out = W v (inverse = false) or W^{-1} v.
void apply_w(const Cones& k, const Scaling& w, const Vec& v, Vec& out, bool inverse) {
  out.resize(k.m);
  for (int i = 0; i < k.l; ++i) out[i] = inverse ? v[i] / w.lp_w[i] : v[i] * w.lp_w[i];
  for (std::size_t c = 0; c < k.q.size(); ++c) {
    const int o = k.off[c];
    const int d = k.q[c];
    const double a = w.wbar[o];
    double zeta = 0.0;
    for (int i = 1; i < d; ++i) zeta += w.wbar[o + i] * v[o + i];
    const double eta = w.eta[c];
    if (!inverse) {
      const double coef = v[o] + zeta / (1.0 + a);
      out[o] = eta * (a * v[o] + zeta);
      for (int i = 1; i < d; ++i) out[o + i] = eta * (v[o + i] + coef * w.wbar[o + i]);
    } else {
      const double coef = -v[o] + zeta / (1.0 + a);
      out[o] = (a * v[o] - zeta) / eta;
      for (int i = 1; i < d; ++i) out[o + i] = (v[o + i] + coef * w.wbar[o + i]) / eta;
    }
  }
}

// out = W^2 v
void apply_w2(const Cones& k, const Scaling& w, const Vec& v, Vec& out) {
  out.resize(k.m);
  for (int i = 0; i < k.l; ++i) out[i] = w.lp_w[i] * w.lp_w[i] * v[i];
  for (std::size_t c = 0; c < k.q.size(); ++c) {
    const int o = k.off[c];
    const int d = k.q[c];
    double wv = 0.0;
    for (int i = 0; i < d; ++i) wv += w.wbar[o + i] * v[o + i];
    const double e2 = w.eta[c] * w.eta[c];
    out[o] = e2 * (2.0 * w.wbar[o] * wv - v[o]);
    for (int i = 1; i < d; ++i) out[o + i] = e2 * (2.0 * w.wbar[o + i] * wv + v[o + i]);
  }
}

void jordan_prod(const Cones& k, const Vec& u, const Vec& v, Vec& out) {
  out.resize(k.m);
  for (int i = 0; i < k.l; ++i) out[i] = u[i] * v[i];
  for (std::size_t c = 0; c < k.q.size(); ++c) {
    const int o = k.off[c];
    const int d = k.q[c];
    double dot = 0.0;
    for (int i = 0; i < d; ++i) dot += u[o + i] * v[o + i];
    for (int i = 1; i < d; ++i) out[o + i] = u[o] * v[o + i] + v[o] * u[o + i];
    out[o] = dot;
  }
}

// out = lambda \ v, i.e. the x with lambda o x = v.
void jordan_div(const Cones& k, const Vec& lam, const Vec& v, Vec& out) {
  out.resize(k.m);
  for (int i = 0; i < k.l; ++i) out[i] = v[i] / lam[i];
  for (std::size_t c = 0; c < k.q.size(); ++c) {
    const int o = k.off[c];
    const int d = k.q[c];
    double t2 = 0.0;
    double nu = 0.0;
    for (int i = 1; i < d; ++i) {
      t2 += lam[o + i] * lam[o + i];
      nu += lam[o + i] * v[o + i];
    }
    const double rho = lam[o] * lam[o] - t2;
    const double x0 = (lam[o] * v[o] - nu) / rho;
    out[o] = x0;
    for (int i = 1; i < d; ++i) out[o + i] = (v[o + i] - x0 * lam[o + i]) / lam[o];
  }
}

// Largest alpha with x + alpha dx in the cone; x must be interior.
double max_step(const Cones& k, const Vec& x, const Vec& dx) {
  double alpha = std::numeric_limits<double>::infinity();
  for (int i = 0; i < k.l; ++i) {
    if (dx[i] < 0.0) alpha = std::min(alpha, -x[i] / dx[i]);
  }
  for (std::size_t c = 0; c < k.q.size(); ++c) {
    const int o = k.off[c];
    const int d = k.q[c];
    const double nu = soc_det_root(x.data() + o, d);
    if (!(nu > 0.0)) return 0.0;
    const double x0 = x[o] / nu;
    const double d0 = dx[o] / nu;
    double rho0 = x0 * d0;
    for (int i = 1; i < d; ++i) rho0 -= (x[o + i] / nu) * (dx[o + i] / nu);
    const double f = (rho0 + d0) / (x0 + 1.0);
    double r1 = 0.0;
    for (int i = 1; i < d; ++i) {
      const double t = dx[o + i] / nu - f * (x[o + i] / nu);
      r1 += t * t;
    }
    const double t = std::sqrt(r1) - rho0;
    if (t > 0.0) alpha = std::min(alpha, 1.0 / t);
  }
  return alpha;
}

// Shift v into the interior of the cone if it is not strictly inside.
void bring_to_cone(const Cones& k, Vec& v) {
  double margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < k.l; ++i) margin = std::min(margin, v[i]);
  for (std::size_t c = 0; c < k.q.size(); ++c) {
    margin = std::min(margin, v[k.off[c]] - soc_tail_norm(v.data() + k.off[c], k.q[c]));
  }
  if (k.m == 0 || margin > 0.0) return;
  const double shift = 1.0 - margin;
  for (int i = 0; i < k.l; ++i) v[i] += shift;
  for (int o : k.off) v[o] += shift;
}

double inf_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Pattern-dependent state reusable across programs with the same structure.
struct Symbolic {
  std::vector<int> a_outer, a_inner, g_outer, g_inner;
  Eigen::Index a_rows = 0, g_rows = 0;
  int l = 0;
  std::vector<int> q;
  SparseMatrix kkt;
  std::vector<int> zpos;  // value index of each (upper) z-block entry, in fill order
  detail::QuasiDefiniteLdl ldl;
  bool analyzed = false;

  bool matches(const SparseMatrix& a, const SparseMatrix& g, const ConicProgram& p) const {
    auto same = [](const std::vector<int>& v, const int* ptr, Eigen::Index n) {
      return static_cast<Eigen::Index>(v.size()) == n && std::equal(v.begin(), v.end(), ptr);
    };
    return analyzed && l == p.n_nonneg && q == p.soc_dims && a_rows == a.rows() && g_rows == g.rows() &&
           same(a_outer, a.outerIndexPtr(), a.cols() + 1) && same(a_inner, a.innerIndexPtr(), a.nonZeros()) &&
           same(g_outer, g.outerIndexPtr(), g.cols() + 1) && same(g_inner, g.innerIndexPtr(), g.nonZeros());
  }
};

class IpmSolver final : public ConicSolver {
 public:
  std::string_view name() const override { return "ipm"; }
  ConicSolution solve(const ConicProgram& program, const SolverSettings& settings) override;

 private:
  std::shared_ptr<Symbolic> symbolic_;
};

constexpr double kStaticReg = 1e-8;
constexpr int kRefineSteps = 8;
constexpr double kStepFactor = 0.99;
constexpr double kSigmaMin = 1e-4;
constexpr double kSigmaMax = 1.0;

ConicSolution IpmSolver::solve(const ConicProgram& prog, const SolverSettings& st) {
  prog.validate();
  const int n = prog.n;
  const int p = prog.n_eq();
  const Cones cones(prog);
  const int m = cones.m;

  std::ostringstream log;
  log << "ipm: n=" << n << " p=" << p << " m=" << m << " soc=" << cones.q.size() << '\n';

  // ---- equilibration (Ruiz, cone-block uniform rows) ----
  SparseMatrix A = prog.A;
  SparseMatrix G = prog.G;
  A.makeCompressed();
  G.makeCompressed();
  Vec col_scale = Vec::Ones(n);
  Vec a_scale = Vec::Ones(p);
  Vec g_scale = Vec::Ones(m);
  for (int it = 0; it < 12; ++it) {
    Vec col_max = Vec::Zero(n);
    Vec a_row = Vec::Zero(p);
    Vec g_row = Vec::Zero(m);
    for (int j = 0; j < n; ++j) {
      for (SparseMatrix::InnerIterator e(A, j); e; ++e) {
        const double v = std::abs(e.value());
        col_max[j] = std::max(col_max[j], v);
        a_row[e.row()] = std::max(a_row[e.row()], v);
      }
      for (SparseMatrix::InnerIterator e(G, j); e; ++e) {
        const double v = std::abs(e.value());
        col_max[j] = std::max(col_max[j], v);
        g_row[e.row()] = std::max(g_row[e.row()], v);
      }
    }
    for (std::size_t c = 0; c < cones.q.size(); ++c) {
      const int o = cones.off[c];
      const double mx = g_row.segment(o, cones.q[c]).maxCoeff();
      g_row.segment(o, cones.q[c]).setConstant(mx);
    }
    auto factor = [](double v) { return v > 0.0 ? std::clamp(1.0 / std::sqrt(v), 1e-4, 1e4) : 1.0; };
    Vec cf(n), af(p), gf(m);
    for (int j = 0; j < n; ++j) cf[j] = factor(col_max[j]);
    for (int i = 0; i < p; ++i) af[i] = factor(a_row[i]);
    for (int i = 0; i < m; ++i) gf[i] = factor(g_row[i]);
    A = af.asDiagonal() * A * cf.asDiagonal();
    G = gf.asDiagonal() * G * cf.asDiagonal();
    col_scale.array() *= cf.array();
    a_scale.array() *= af.array();
    g_scale.array() *= gf.array();
  }
  A.makeCompressed();
  G.makeCompressed();
  const Vec c = col_scale.cwiseProduct(prog.c);
  const Vec b = a_scale.cwiseProduct(prog.b);
  const Vec h = g_scale.cwiseProduct(prog.h);

  // ---- KKT pattern ----
  if (!symbolic_ || !symbolic_->matches(A, G, prog)) {
    auto sym = std::make_shared<Symbolic>();
    sym->a_outer.assign(A.outerIndexPtr(), A.outerIndexPtr() + A.cols() + 1);
    sym->a_inner.assign(A.innerIndexPtr(), A.innerIndexPtr() + A.nonZeros());
    sym->g_outer.assign(G.outerIndexPtr(), G.outerIndexPtr() + G.cols() + 1);
    sym->g_inner.assign(G.innerIndexPtr(), G.innerIndexPtr() + G.nonZeros());
    sym->a_rows = A.rows();
    sym->g_rows = G.rows();
    sym->l = prog.n_nonneg;
    sym->q = prog.soc_dims;
    std::vector<Eigen::Triplet<double, int>> trip;
    trip.reserve(static_cast<std::size_t>(n + p + A.nonZeros() + G.nonZeros() + m * 4));
    for (int j = 0; j < n; ++j) {
      trip.emplace_back(j, j, 1.0);
      for (SparseMatrix::InnerIterator e(A, j); e; ++e) trip.emplace_back(j, n + e.row(), 1.0);
      for (SparseMatrix::InnerIterator e(G, j); e; ++e) trip.emplace_back(j, n + p + e.row(), 1.0);
    }
    for (int i = 0; i < p; ++i) trip.emplace_back(n + i, n + i, -1.0);
    // Second-order cone scalings enter as diagonal plus two rank-one terms,
    // each carried by an extra column, which keeps the matrix sparse.
    std::vector<std::pair<int, int>> zentries;
    for (int i = 0; i < cones.l; ++i) zentries.emplace_back(i, i);
    for (std::size_t cc = 0; cc < cones.q.size(); ++cc) {
      for (int r = 0; r < cones.q[cc]; ++r) zentries.emplace_back(cones.off[cc] + r, cones.off[cc] + r);
    }
    for (std::size_t cc = 0; cc < cones.q.size(); ++cc) {
      for (int extra = 0; extra < 2; ++extra) {
        const int col = m + 2 * static_cast<int>(cc) + extra;
        for (int r = 0; r < cones.q[cc]; ++r) zentries.emplace_back(cones.off[cc] + r, col);
        zentries.emplace_back(col, col);
      }
    }
    for (const auto& [r, cl] : zentries) trip.emplace_back(n + p + r, n + p + cl, -1.0);
    const int dim = n + p + m + 2 * static_cast<int>(cones.q.size());
    sym->kkt.resize(dim, dim);
    sym->kkt.setFromTriplets(trip.begin(), trip.end());
    sym->kkt.makeCompressed();
    sym->zpos.reserve(zentries.size());
    const int* outer = sym->kkt.outerIndexPtr();
    const int* inner = sym->kkt.innerIndexPtr();
    for (const auto& [r, cl] : zentries) {
      const int col = n + p + cl;
      const int row = n + p + r;
      const int* it = std::lower_bound(inner + outer[col], inner + outer[col + 1], row);
      sym->zpos.push_back(static_cast<int>(it - inner));
    }
    std::vector<int> signs(dim, -1);
    for (int j = 0; j < n; ++j) signs[j] = 1;
    for (std::size_t cc = 0; cc < cones.q.size(); ++cc) signs[n + p + m + 2 * cc + 1] = 1;
    sym->ldl.analyze(sym->kkt, signs);
    sym->analyzed = true;
    symbolic_ = sym;
  }
  Symbolic& sym = *symbolic_;
  SparseMatrix& K = sym.kkt;

  // Fill values that do not depend on the scaling.
  {
    double* val = K.valuePtr();
    const int* outer = K.outerIndexPtr();
    const int* inner = K.innerIndexPtr();
    for (int col = 0; col < n + p; ++col) {
      for (int idx = outer[col]; idx < outer[col + 1]; ++idx) {
        const int row = inner[idx];
        if (row == col) val[idx] = col < n ? kStaticReg : -kStaticReg;
      }
    }
    // G' and A' blocks sit above the diagonal: row = variable, column = constraint.
    auto place = [&](int row, int col, double v) {
      const int* it = std::lower_bound(inner + outer[col], inner + outer[col + 1], row);
      val[it - inner] = v;
    };
    for (int j = 0; j < n; ++j) {
      for (SparseMatrix::InnerIterator e(G, j); e; ++e) place(j, n + p + e.row(), e.value());
      for (SparseMatrix::InnerIterator e(A, j); e; ++e) place(j, n + e.row(), e.value());
    }
  }

  Scaling W;
  // -W^2 for a cone is -eta^2 (D + u u' - v v') with D = diag(d1, 1, ..., 1),
  // u = (u0, u1 qhat), v = (v0, v1 qhat), where wbar = (a, q) and w = |q|^2.
  // The split keeps the smallest eigenvalue of D - v v' of the same order as
  // that of W^2 itself.
  auto set_scaling_block = [&](double reg) {
    constexpr double theta = 0.5;
    double* val = K.valuePtr();
    std::size_t e = 0;
    for (int i = 0; i < cones.l; ++i) val[sym.zpos[e++]] = -(W.lp_w[i] * W.lp_w[i]) - reg;
    const std::size_t nq = cones.q.size();
    std::vector<double> u0(nq), u1(nq), v0(nq), v1(nq), inv_r(nq);
    for (std::size_t cc = 0; cc < nq; ++cc) {
      const int o = cones.off[cc];
      const double a = W.wbar[o];
      double w = 0.0;
      for (int r = 1; r < cones.q[cc]; ++r) w += W.wbar[o + r] * W.wbar[o + r];
      const double rn = std::sqrt(w);
      inv_r[cc] = rn > 0.0 ? 1.0 / rn : 0.0;
      const double d1 = 1.0 / (2.0 * w + 1.0) + 2.0 * a * a * theta * w / ((w + theta) * (w + theta));
      u0[cc] = a * rn * std::sqrt(2.0 * w + theta) / (w + theta);
      u1[cc] = std::sqrt(2.0 * w + theta);
      v0[cc] = -a * rn * std::sqrt(theta) / (w + theta);
      v1[cc] = std::sqrt(theta);
      const double e2 = W.eta[cc] * W.eta[cc];
      val[sym.zpos[e++]] = -e2 * d1 - reg;
      for (int r = 1; r < cones.q[cc]; ++r) val[sym.zpos[e++]] = -e2 - reg;
    }
    for (std::size_t cc = 0; cc < nq; ++cc) {
      const int o = cones.off[cc];
      const double eta = W.eta[cc];
      val[sym.zpos[e++]] = -eta * v0[cc];
      for (int r = 1; r < cones.q[cc]; ++r) val[sym.zpos[e++]] = -eta * v1[cc] * W.wbar[o + r] * inv_r[cc];
      val[sym.zpos[e++]] = -1.0;
      val[sym.zpos[e++]] = -eta * u0[cc];
      for (int r = 1; r < cones.q[cc]; ++r) val[sym.zpos[e++]] = -eta * u1[cc] * W.wbar[o + r] * inv_r[cc];
      val[sym.zpos[e++]] = 1.0;
    }
  };

  auto set_diag_reg = [&](double reg) {
    double* val = K.valuePtr();
    const int* outer = K.outerIndexPtr();
    const int* inner = K.innerIndexPtr();
    for (int col = 0; col < n + p; ++col) {
      const int last = outer[col + 1] - 1;  // diagonal is the last entry of an upper column
      if (last >= outer[col] && inner[last] == col) val[last] = col < n ? reg : -reg;
    }
  };

  // Exact KKT product (no regularization) for refinement.
  bool identity_scaling = true;
  auto kkt_multiply = [&](const Vec& v, Vec& out) {
    out.resize(n + p + m);
    const auto vx = v.head(n);
    const auto vy = v.segment(n, p);
    const Vec vz = v.tail(m);
    out.head(n) = A.transpose() * vy + G.transpose() * vz;
    out.segment(n, p) = A * vx;
    Vec w2;
    if (identity_scaling) {
      w2 = vz;
    } else {
      apply_w2(cones, W, vz, w2);
    }
    out.tail(m) = G * vx - w2;
  };

  bool factor_ok = true;
  auto factor = [&]() {
    const int bumped = sym.ldl.factorize(K);
    if (bumped > 0 && st.verbose) std::fprintf(stderr, "   %d pivots regularized\n", bumped);
    factor_ok = true;
  };

  const int dim_ext = static_cast<int>(K.rows());
  auto ext_solve = [&](const Vec& r) {
    Vec big = Vec::Zero(dim_ext);
    big.head(r.size()) = r;
    return Vec(sym.ldl.solve(big).head(r.size()));
  };

  auto kkt_solve = [&](const Vec& rhs) {
    Vec sol = ext_solve(rhs);
    Vec prod;
    double best_res = std::numeric_limits<double>::infinity();
    Vec best = sol;
    const double tol = 1e-14 * (1.0 + inf_norm(rhs));
    for (int it = 0; it < kRefineSteps; ++it) {
      kkt_multiply(sol, prod);
      const Vec res = rhs - prod;
      const double rn = inf_norm(res);
      if (rn < best_res) {
        best_res = rn;
        best = sol;
      }
      if (rn <= tol || !std::isfinite(rn)) break;
      sol += ext_solve(res);
    }
    return best;
  };

  // ---- initial point ----
  Vec x(n), y(p), z(m), s(m);
  double tau = 1.0;
  double kappa = 1.0;
  {
    // Identity scaling in the z block.
    double* val = K.valuePtr();
    std::size_t e = 0;
    for (int i = 0; i < m; ++i) val[sym.zpos[e++]] = -1.0 - kStaticReg;
    for (std::size_t cc = 0; cc < cones.q.size(); ++cc) {
      for (int extra = 0; extra < 2; ++extra) {
        for (int r = 0; r < cones.q[cc]; ++r) val[sym.zpos[e++]] = 0.0;
        val[sym.zpos[e++]] = extra == 0 ? -1.0 : 1.0;
      }
    }
    factor();
    log << "kkt nnz=" << K.nonZeros() << " factor nnz=" << sym.ldl.factor_nonzeros() << '\n';
    if (!factor_ok) {
      ConicSolution sol;
      sol.status = SolveStatus::numerical_trouble;
      sol.log = log.str() + "initial factorization failed\n";
      return sol;
    }
    Vec rhs(n + p + m);
    rhs << Vec::Zero(n), b, h;
    Vec v = kkt_solve(rhs);
    x = v.head(n);
    s = -v.tail(m);
    bring_to_cone(cones, s);
    rhs << -c, Vec::Zero(p), Vec::Zero(m);
    v = kkt_solve(rhs);
    y = v.segment(n, p);
    z = v.tail(m);
    bring_to_cone(cones, z);
    identity_scaling = false;
  }

  const double bnorm = std::max(1.0, inf_norm(prog.b));
  const double hnorm = std::max(1.0, inf_norm(prog.h));
  const double cnorm = std::max(1.0, inf_norm(prog.c));

  ConicSolution out;
  out.status = SolveStatus::max_iterations;

  struct Metrics {
    double pres, dres, pcost, dcost, gap, relgap;
    double pinf = std::numeric_limits<double>::infinity();
    double dinf = std::numeric_limits<double>::infinity();
    bool pinf_cert = false, dinf_cert = false;
  };
  auto evaluate = [&]() {
    Metrics mt{};
    const Vec xu = col_scale.cwiseProduct(x);
    const Vec su = s.cwiseQuotient(g_scale);
    const Vec yu = a_scale.cwiseProduct(y);
    const Vec zu = g_scale.cwiseProduct(z);
    const Vec ax = prog.A * xu;
    const Vec gx = prog.G * xu;
    const Vec aty = prog.A.transpose() * yu + prog.G.transpose() * zu;
    mt.pres = std::max(inf_norm(ax - prog.b * tau) / bnorm, inf_norm(gx + su - prog.h * tau) / hnorm) / tau;
    mt.dres = inf_norm(aty + prog.c * tau) / cnorm / tau;
    mt.pcost = prog.c.dot(xu) / tau;
    mt.dcost = -(prog.b.dot(yu) + prog.h.dot(zu)) / tau;
    mt.gap = su.dot(zu) / (tau * tau);
    const double denom = std::min(std::abs(mt.pcost), std::abs(mt.dcost));
    mt.relgap = denom > 0.0 ? mt.gap / denom : std::numeric_limits<double>::infinity();
    const double byhz = prog.b.dot(yu) + prog.h.dot(zu);
    if (byhz < 0.0) {
      mt.pinf = inf_norm(aty) / cnorm / (-byhz);
      mt.pinf_cert = true;
    }
    const double cx = prog.c.dot(xu);
    if (cx < 0.0) {
      mt.dinf = std::max(inf_norm(ax) / bnorm, inf_norm(gx + su) / hnorm) / (-cx);
      mt.dinf_cert = true;
    }
    return mt;
  };

  auto finish = [&](SolveStatus status, bool reduced) {
    out.status = status;
    out.reduced_accuracy = reduced;
    const double t = status == SolveStatus::optimal || status == SolveStatus::max_iterations ||
                             status == SolveStatus::numerical_trouble
                         ? tau
                         : 1.0;
    out.x = col_scale.cwiseProduct(x) / t;
    out.s = s.cwiseQuotient(g_scale) / t;
    out.y = a_scale.cwiseProduct(y) / t;
    out.z = g_scale.cwiseProduct(z) / t;
    out.primal_objective = prog.c.dot(out.x) + prog.c0;
    out.dual_objective = -(prog.b.dot(out.y) + prog.h.dot(out.z)) + prog.c0;
    out.log = log.str();
  };

  Vec rhs(n + p + m), sol1, sol2;
  Vec lam_ds, wlds, tmp, ds_scaled, dz_scaled, prod;
  Metrics last{};
  bool have_last = false;
  for (int iter = 0; iter <= st.max_iterations; ++iter) {
    // residuals on scaled data
    const Vec rx = A.transpose() * y + G.transpose() * z + c * tau;
    const Vec ry = A * x - b * tau;
    const Vec rz = s + G * x - h * tau;
    const double rt = kappa + c.dot(x) + b.dot(y) + h.dot(z);
    const double mu = (s.dot(z) + tau * kappa) / (cones.degree + 1);

    const Metrics mt = evaluate();
    last = mt;
    have_last = true;
    out.iterations = iter;
    out.primal_residual = mt.pres;
    out.dual_residual = mt.dres;
    out.gap = mt.gap;
    {
      char line[200];
      std::snprintf(line, sizeof(line), "%3d pcost=% .9e dcost=% .9e gap=%.2e pres=%.2e dres=%.2e k/t=%.2e\n", iter,
                    mt.pcost, mt.dcost, mt.gap, mt.pres, mt.dres, kappa / tau);
      log << line;
      if (st.verbose) std::fputs(line, stderr);
    }
    if (!std::isfinite(mt.pres) || !std::isfinite(mt.dres) || !std::isfinite(mu)) {
      finish(SolveStatus::numerical_trouble, false);
      return out;
    }
    if (mt.pres < st.feastol && mt.dres < st.feastol && (mt.gap < st.abstol || mt.relgap < st.reltol)) {
      finish(SolveStatus::optimal, false);
      return out;
    }
    if (mt.pinf_cert && mt.pinf < st.feastol && tau < kappa) {
      finish(SolveStatus::primal_infeasible, false);
      return out;
    }
    if (mt.dinf_cert && mt.dinf < st.feastol && tau < kappa) {
      finish(SolveStatus::dual_infeasible, false);
      return out;
    }
    if (iter == st.max_iterations) break;

    if (!update_scaling(cones, s, z, W)) break;
    apply_w(cones, W, z, W.lambda, false);
    // Escalate the regularization when a pivot vanishes; refinement runs
    // against the exact matrix, so only convergence speed suffers.
    double reg = kStaticReg;
    for (int attempt = 0; attempt < 4; ++attempt, reg *= 100.0) {
      set_diag_reg(reg);
      set_scaling_block(reg);
      factor();
      if (factor_ok) break;
      log << "factorization failed with regularization " << reg << '\n';
    }
    if (!factor_ok) break;

    rhs << -c, b, h;
    sol1 = kkt_solve(rhs);
    const auto x1 = sol1.head(n);
    const auto y1 = sol1.segment(n, p);
    const auto z1 = sol1.tail(m);
    const double denom_t = c.dot(x1) + b.dot(y1) + h.dot(z1) - kappa / tau;

    // Solves the reduced system for the given complementarity targets.
    struct Dir {
      Vec dx, dy, dz, ds;
      double dtau = 0.0, dkappa = 0.0;
    };
    auto direction = [&](double sigma, const Vec& ds_target, double dk_target) {
      Dir d;
      const double f = 1.0 - sigma;
      jordan_div(cones, W.lambda, ds_target, lam_ds);
      apply_w(cones, W, lam_ds, wlds, false);
      rhs << -f * rx, -f * ry, -f * rz - wlds;
      sol2 = kkt_solve(rhs);
      const auto x2 = sol2.head(n);
      const auto y2 = sol2.segment(n, p);
      const auto z2 = sol2.tail(m);
      d.dtau = (-f * rt - dk_target / tau - (c.dot(x2) + b.dot(y2) + h.dot(z2))) / denom_t;
      d.dx = x2 + d.dtau * x1;
      d.dy = y2 + d.dtau * y1;
      d.dz = z2 + d.dtau * z1;
      d.dkappa = (dk_target - kappa * d.dtau) / tau;
      apply_w2(cones, W, d.dz, tmp);
      d.ds = wlds - tmp;
      return d;
    };
    auto step_length = [&](const Dir& d) {
      apply_w(cones, W, d.ds, ds_scaled, true);
      apply_w(cones, W, d.dz, dz_scaled, false);
      double a = std::min(max_step(cones, W.lambda, ds_scaled), max_step(cones, W.lambda, dz_scaled));
      if (d.dtau < 0.0) a = std::min(a, -tau / d.dtau);
      if (d.dkappa < 0.0) a = std::min(a, -kappa / d.dkappa);
      return a;
    };

    // predictor
    Vec lam2;
    jordan_prod(cones, W.lambda, W.lambda, lam2);
    const Dir aff = direction(0.0, -lam2, -tau * kappa);
    const double alpha_aff = std::min(1.0, step_length(aff));
    const Vec ds_aff_s = ds_scaled;  // W^{-1} ds_aff
    const Vec dz_aff_s = dz_scaled;  // W dz_aff
    const double sigma = std::clamp(std::pow(1.0 - alpha_aff, 3), kSigmaMin, kSigmaMax);

    // corrector
    jordan_prod(cones, ds_aff_s, dz_aff_s, prod);
    Vec target = -lam2 - prod;
    for (int i = 0; i < cones.l; ++i) target[i] += sigma * mu;
    for (int o : cones.off) target[o] += sigma * mu;
    const double dk_target = -tau * kappa - aff.dtau * aff.dkappa + sigma * mu;
    const Dir d = direction(sigma, target, dk_target);
    double alpha = step_length(d);
    alpha = std::min(1.0, kStepFactor * alpha);
    if (!(alpha > 1e-10)) {
      log << "step length collapsed\n";
      break;
    }
    // Keep the last finite iterate for the reduced-accuracy exit below.
    if (!d.dx.allFinite() || !d.dy.allFinite() || !d.dz.allFinite() || !d.ds.allFinite() ||
        !std::isfinite(d.dtau) || !std::isfinite(d.dkappa)) {
      log << "non-finite search direction\n";
      break;
    }
    x += alpha * d.dx;
    y += alpha * d.dy;
    z += alpha * d.dz;
    s += alpha * d.ds;
    tau += alpha * d.dtau;
    kappa += alpha * d.dkappa;
  }

  // Stalled or out of iterations: accept a reduced-accuracy optimum when close.
  if (have_last && last.pres < st.feastol_inaccurate && last.dres < st.feastol_inaccurate &&
      (last.gap < st.feastol_inaccurate || last.relgap < st.reltol_inaccurate)) {
    log << "returning reduced-accuracy solution\n";
    finish(SolveStatus::optimal, true);
    return out;
  }
  if (have_last && last.pinf_cert && last.pinf < st.feastol_inaccurate && tau < kappa) {
    finish(SolveStatus::primal_infeasible, true);
    return out;
  }
  if (have_last && last.dinf_cert && last.dinf < st.feastol_inaccurate && tau < kappa) {
    finish(SolveStatus::dual_infeasible, true);
    return out;
  }
  finish(out.iterations >= st.max_iterations ? SolveStatus::max_iterations : SolveStatus::numerical_trouble, false);
  return out;
}

}  // namespace

std::unique_ptr<ConicSolver> make_ipm_solver() { return std::make_unique<IpmSolver>(); }

}  // namespace coopt
