#pragma once

// Small synthetic datasets shared by the unit tests.

#include <algorithm>
#include <cmath>
#include <cstdint>

#include <Eigen/Core>

#include "coopt/rng.hpp"

namespace testdata {

/// Rows are days of step-averaged normalized deviations: AR(1) with a small
/// positive drift, kept inside [-1, 1].
inline Eigen::MatrixXd ar_frequency(int days, int n_t, std::uint64_t seed, double phi = 0.6, double scale = 0.12) {
  Eigen::MatrixXd out(days, n_t);
  for (int d = 0; d < days; ++d) {
    coopt::Rng rng(seed, static_cast<std::uint64_t>(d));
    double x = scale * rng.normal();
    for (int k = 0; k < n_t; ++k) {
      x = phi * x + std::sqrt(1.0 - phi * phi) * scale * rng.normal();
      out(d, k) = std::clamp(0.01 + x, -1.0, 1.0);
    }
  }
  return out;
}

/// Net household profiles (kW): evening demand minus a midday PV bump.
inline Eigen::MatrixXd net_profiles(int n, int n_t, std::uint64_t seed) {
  Eigen::MatrixXd out(n, n_t);
  for (int j = 0; j < n; ++j) {
    coopt::Rng rng(seed, static_cast<std::uint64_t>(j));
    const double pv_peak = rng.uniform(1.0, 3.0);
    for (int k = 0; k < n_t; ++k) {
      const double hour = (k + 0.5) * 24.0 / n_t;
      const double load = 0.4 + 0.8 * std::exp(-0.5 * std::pow((hour - 19.0) / 2.0, 2)) + 0.1 * rng.uniform();
      const double pv = pv_peak * std::exp(-0.5 * std::pow((hour - 13.0) / 2.5, 2));
      out(j, k) = load - pv;
    }
  }
  return out;
}

}  // namespace testdata
