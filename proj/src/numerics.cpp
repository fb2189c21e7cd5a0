#include "netlasso/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "netlasso/errors.hpp"

namespace netlasso {

L1Ball::L1Ball(double radius) : radius_(radius) {
  if (!(radius >= 0.0) || !std::isfinite(radius)) {
    throw InvalidArgument("l1 ball radius must be finite and nonnegative");
  }
}

bool L1Ball::contains(std::span<const double> x, double rel_slack) const {
  return l1_norm(x) <= radius_ * (1.0 + rel_slack);
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

bool all_finite(const RealMatrix& m) { return m.allFinite(); }

double l1_norm(std::span<const double> x) {
  double sum = 0.0;
  for (double v : x) sum += std::abs(v);
  return sum;
}

namespace {

void check_projection_args(std::span<const double> v, double r) {
  if (!(r >= 0.0) || !std::isfinite(r)) {
    throw InvalidArgument("projection radius must be finite and nonnegative");
  }
  if (!all_finite(v)) {
    throw InvalidArgument("projection input has non-finite entries");
  }
}

double threshold_unchecked(std::span<const double> v, double r) {
  std::vector<double> magnitudes(v.size());
  std::transform(v.begin(), v.end(), magnitudes.begin(),
                 [](double x) { return std::abs(x); });
  std::sort(magnitudes.begin(), magnitudes.end(), std::greater<>());

  // tau = (sum of the k largest magnitudes - r) / k for the largest k whose
  // k-th magnitude still exceeds it.
  double prefix = 0.0;
  double tau = 0.0;
  for (std::size_t k = 0; k < magnitudes.size(); ++k) {
    prefix += magnitudes[k];
    const double candidate = (prefix - r) / static_cast<double>(k + 1);
    if (magnitudes[k] > candidate) {
      tau = candidate;
    } else {
      break;
    }
  }
  return std::max(tau, 0.0);
}

}  // namespace

double l1_projection_threshold(std::span<const double> v, double r) {
  check_projection_args(v, r);
  if (l1_norm(v) <= r) return 0.0;
  return threshold_unchecked(v, r);
}

void project_l1_ball(std::span<const double> v, double r,
                     std::span<double> out) {
  if (out.size() != v.size()) {
    throw InvalidArgument("projection output size mismatch");
  }
  check_projection_args(v, r);
  if (l1_norm(v) <= r) {
    if (out.data() != v.data()) std::copy(v.begin(), v.end(), out.begin());
    return;
  }
  if (r == 0.0) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  const double tau = threshold_unchecked(v, r);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double shrunk = std::abs(v[i]) - tau;
    out[i] = shrunk > 0.0 ? std::copysign(shrunk, v[i]) : 0.0;
  }
}

RealVector project_l1_ball(const RealVector& v, double r) {
  RealVector out(v.size());
  project_l1_ball(std::span<const double>(v.data(), v.size()), r,
                  std::span<double>(out.data(), out.size()));
  return out;
}

double spectral_norm(const RealMatrix& m, double tol) {
  if (!(tol > 0.0 && tol <= 1e-3)) {
    throw InvalidArgument("spectral_norm tolerance must lie in (0, 1e-3]");
  }
  if (!m.allFinite()) {
    throw InvalidArgument("spectral_norm input has non-finite entries");
  }
  const Eigen::Index n = m.cols();
  if (n == 0 || m.rows() == 0 || m.cwiseAbs().maxCoeff() == 0.0) return 0.0;

  // All-ones start with index-dependent offsets so that the start is not
  // orthogonal to the top singular vector for structured inputs such as
  // W - J, whose null space contains the all-ones vector.
  RealVector v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    v[i] = 1.0 + 0.5 * static_cast<double>((i * 7919 + 13) % 1009) / 1009.0;
  }
  v.normalize();

  const long cap = std::max<long>(10 * static_cast<long>(n), 1000);
  double lambda = 0.0;
  for (long it = 0; it < cap; ++it) {
    const RealVector mv = m * v;
    RealVector w = m.transpose() * mv;
    lambda = v.dot(w);
    const double residual = (w - lambda * v).norm();
    const double w_norm = w.norm();
    if (w_norm == 0.0) return 0.0;
    if (residual <= tol * lambda) return std::sqrt(lambda);
    v = w / w_norm;
  }
  throw ConvergenceFailure("spectral_norm: power iteration did not converge",
                           std::sqrt(std::max(lambda, 0.0)), tol);
}

double spectral_norm_symmetric_exact(const RealMatrix& m) {
  if (m.rows() != m.cols()) {
    throw InvalidArgument("exact spectral norm needs a square matrix");
  }
  if (!m.allFinite()) {
    throw InvalidArgument("spectral norm input has non-finite entries");
  }
  if (m.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<RealMatrix> solver(m, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw ConvergenceFailure("symmetric eigensolver failed", 0.0, 0.0);
  }
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

bool is_symmetric(const RealMatrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < m.cols(); ++j) {
      if (std::abs(m(i, j) - m(j, i)) > tol) return false;
    }
  }
  return true;
}

}  // namespace netlasso
