#include <algorithm>
#include <cmath>

#include "coopt/kernels.hpp"

namespace coopt::kernels {

namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double squared_distance_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

double sum_exp_scalar(const double* x, std::size_t n, double scale, double shift) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::exp(scale * x[i] - shift);
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void battery_step_scalar(double* e, const double* p, std::size_t n, double eta_c, double eta_d,
                         double dt) {
  for (std::size_t i = 0; i < n; ++i) {
    const double charge = std::max(p[i], 0.0);
    const double discharge = std::max(-p[i], 0.0);
    e[i] += (eta_c * charge - discharge / eta_d) * dt;
  }
}

}  // namespace

const KernelTable& scalar() {
  static const KernelTable table{"scalar",      dot_scalar,   squared_distance_scalar,
                                 sum_exp_scalar, axpy_scalar, battery_step_scalar};
  return table;
}

}  // namespace coopt::kernels
