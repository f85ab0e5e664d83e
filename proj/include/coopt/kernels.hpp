#pragma once

// Data-parallel inner loops. Each kernel has a scalar reference and an AVX2
// variant; the active table is chosen once at startup from the CPU features.
// Setting COOPT_SIMD=scalar in the environment forces the reference path.

#include <cstddef>
#include <span>
#include <string_view>

namespace coopt::kernels {

struct KernelTable {
  std::string_view name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  // sum_i exp(scale * x_i - shift)
  double (*sum_exp)(const double* x, std::size_t n, double scale, double shift);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // e_i += (eta_c * max(p_i, 0) - max(-p_i, 0) / eta_d) * dt
  void (*battery_step)(double* e, const double* p, std::size_t n, double eta_c, double eta_d,
                       double dt);
};

const KernelTable& scalar();
// nullptr when the binary was built without AVX2 support or the CPU lacks it.
const KernelTable* avx2();
const KernelTable& active();

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  return active().squared_distance(a.data(), b.data(), a.size());
}

inline double sum_exp(std::span<const double> x, double scale, double shift) {
  return active().sum_exp(x.data(), x.size(), scale, shift);
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

inline void battery_step(std::span<double> e, std::span<const double> p, double eta_c,
                         double eta_d, double dt) {
  active().battery_step(e.data(), p.data(), e.size(), eta_c, eta_d, dt);
}

}  // namespace coopt::kernels
