#include "ldl.hpp"

#include <algorithm>

#include <Eigen/OrderingMethods>

#include "coopt/errors.hpp"

namespace coopt::detail {

void QuasiDefiniteLdl::analyze(const SparseMatrix& upper, const std::vector<int>& signs) {
  const int n = static_cast<int>(upper.rows());
  if (upper.cols() != n || static_cast<int>(signs.size()) != n) throw ValidationError("ldl: bad dimensions");

  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> p;
  Eigen::AMDOrdering<int> amd;
  SparseMatrix full = upper.selfadjointView<Eigen::Upper>();
  amd(full, p);
  // p maps new -> old
  std::vector<int> new_of(n);
  perm_.assign(n, 0);
  for (int i = 0; i < n; ++i) {
    perm_[i] = p.indices()[i];
    new_of[perm_[i]] = i;
  }

  // Permuted upper pattern, remembering where each input value lands.
  struct Entry {
    int row, col, src;
  };
  std::vector<Entry> entries;
  entries.reserve(static_cast<std::size_t>(upper.nonZeros()));
  for (int j = 0; j < n; ++j) {
    for (int k = upper.outerIndexPtr()[j]; k < upper.outerIndexPtr()[j + 1]; ++k) {
      const int i = upper.innerIndexPtr()[k];
      int r = new_of[i], c = new_of[j];
      if (r > c) std::swap(r, c);
      entries.push_back({r, c, k});
    }
  }
  std::vector<int> count(n + 1, 0);
  for (const auto& e : entries) ++count[e.col + 1];
  ap_.assign(n + 1, 0);
  for (int j = 0; j < n; ++j) ap_[j + 1] = ap_[j] + count[j + 1];
  std::vector<int> next(ap_.begin(), ap_.end() - 1);
  std::vector<std::pair<int, int>> slots(entries.size());  // (row, src) per column slot
  for (const auto& e : entries) slots[next[e.col]++] = {e.row, e.src};
  ai_.resize(entries.size());
  value_map_.assign(entries.size(), 0);
  for (int j = 0; j < n; ++j) {
    std::sort(slots.begin() + ap_[j], slots.begin() + ap_[j + 1]);
    for (int k = ap_[j]; k < ap_[j + 1]; ++k) {
      ai_[k] = slots[k].first;
      value_map_[slots[k].second] = k;
    }
  }
  ax_.assign(entries.size(), 0.0);
  sign_.resize(n);
  for (int i = 0; i < n; ++i) sign_[new_of[i]] = signs[i] >= 0 ? 1 : -1;

  // Elimination tree and column counts of L.
  etree_.assign(n, -1);
  lnz_.assign(n, 0);
  std::vector<int> work(n, -1);
  for (int j = 0; j < n; ++j) {
    work[j] = j;
    for (int k = ap_[j]; k < ap_[j + 1]; ++k) {
      int i = ai_[k];
      while (i != j && work[i] != j) {
        if (etree_[i] == -1) etree_[i] = j;
        ++lnz_[i];
        work[i] = j;
        i = etree_[i];
      }
    }
  }
  lp_.assign(n + 1, 0);
  for (int i = 0; i < n; ++i) lp_[i + 1] = lp_[i] + lnz_[i];
  li_.assign(lp_[n], 0);
  lx_.assign(lp_[n], 0.0);
  d_.assign(n, 0.0);
  dinv_.assign(n, 0.0);
  n_ = n;
}

int QuasiDefiniteLdl::factorize(const SparseMatrix& upper, double eps, double delta) {
  const int n = n_;
  const double* val = upper.valuePtr();
  for (std::size_t k = 0; k < value_map_.size(); ++k) ax_[value_map_[k]] = val[k];

  std::vector<double> y(n, 0.0);
  std::vector<char> marked(n, 0);
  std::vector<int> y_idx(n), buffer(n);
  std::vector<int> next_slot(lp_.begin(), lp_.end() - 1);
  int regularized = 0;

  for (int k = 0; k < n; ++k) {
    // Scatter column k and find the nonzero pattern of row k of L by walking
    // the elimination tree; y_idx ends up in topological order.
    int nnz_y = 0;
    d_[k] = 0.0;
    for (int p = ap_[k]; p < ap_[k + 1]; ++p) {
      const int i = ai_[p];
      if (i == k) {
        d_[k] = ax_[p];
        continue;
      }
      y[i] = ax_[p];
      if (marked[i]) continue;
      int len = 0;
      int node = i;
      while (node != -1 && node < k && !marked[node]) {
        marked[node] = 1;
        buffer[len++] = node;
        node = etree_[node];
      }
      while (len > 0) y_idx[nnz_y++] = buffer[--len];
    }
    for (int t = nnz_y - 1; t >= 0; --t) {
      const int c = y_idx[t];
      const double yc = y[c];
      const int end = next_slot[c];
      for (int q = lp_[c]; q < end; ++q) y[li_[q]] -= lx_[q] * yc;
      const double l = yc * dinv_[c];
      li_[end] = k;
      lx_[end] = l;
      d_[k] -= yc * l;
      ++next_slot[c];
      y[c] = 0.0;
      marked[c] = 0;
    }
    if (sign_[k] * d_[k] < eps) {
      d_[k] = sign_[k] * delta;
      ++regularized;
    }
    dinv_[k] = 1.0 / d_[k];
  }
  return regularized;
}

Eigen::VectorXd QuasiDefiniteLdl::solve(const Eigen::VectorXd& b) const {
  const int n = n_;
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x[i] = b[perm_[i]];
  for (int i = 0; i < n; ++i) {
    const double xi = x[i];
    for (int q = lp_[i]; q < lp_[i + 1]; ++q) x[li_[q]] -= lx_[q] * xi;
  }
  for (int i = 0; i < n; ++i) x[i] *= dinv_[i];
  for (int i = n - 1; i >= 0; --i) {
    double acc = x[i];
    for (int q = lp_[i]; q < lp_[i + 1]; ++q) acc -= lx_[q] * x[li_[q]];
    x[i] = acc;
  }
  Eigen::VectorXd out(n);
  for (int i = 0; i < n; ++i) out[perm_[i]] = x[i];
  return out;
}

}  // namespace coopt::detail
