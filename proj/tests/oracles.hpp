#pragma once

// Reference implementations used only by the tests. They trade speed for
// obviousness and share no code with the library.

#include <algorithm>
#include <cmath>
#include <vector>

#include "netlasso/numerics.hpp"

namespace oracle {

// Projection onto the l1 ball by bisection on the soft-threshold level:
// x = sign(v) max(|v| - tau, 0) with sum max(|v_i| - tau, 0) = r.
inline std::vector<double> project_l1_bisect(const std::vector<double>& v, double r) {
  double l1 = 0.0, vmax = 0.0;
  for (double x : v) {
    l1 += std::abs(x);
    vmax = std::max(vmax, std::abs(x));
  }
  if (l1 <= r) return v;
  double lo = 0.0, hi = vmax;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    double mass = 0.0;
    for (double x : v) mass += std::max(std::abs(x) - mid, 0.0);
    (mass > r ? lo : hi) = mid;
  }
  const double tau = 0.5 * (lo + hi);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::copysign(std::max(std::abs(v[i]) - tau, 0.0), v[i]);
  }
  return out;
}

// Loss of the stacked least-squares problem from scratch:
// (1 / 2N) sum_i ||y_i - X_i theta||^2.
template <typename Model>
double stacked_loss(const Model& model, const netlasso::RealVector& theta) {
  double sum = 0.0;
  for (std::size_t i = 0; i < model.m(); ++i) {
    const auto& x = model.design(i);
    const auto& y = model.response(i);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      double pred = 0.0;
      for (Eigen::Index c = 0; c < x.cols(); ++c) pred += x(r, c) * theta[c];
      sum += (y[r] - pred) * (y[r] - pred);
    }
  }
  return sum / (2.0 * static_cast<double>(model.total_samples()));
}

}  // namespace oracle
