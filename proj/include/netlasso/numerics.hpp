#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>

namespace netlasso {

using RealVector = Eigen::VectorXd;
using RealMatrix = Eigen::MatrixXd;
/// m x d stack of per-agent vectors, one agent per contiguous row.
using AgentMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Largest dimension for which the exact symmetric eigensolver is used to
/// compute contraction factors.
inline constexpr std::ptrdiff_t kExactEigenLimit = 4096;

/// l1 ball {x : ||x||_1 <= r}.
class L1Ball {
 public:
  explicit L1Ball(double radius);
  double radius() const { return radius_; }
  bool contains(std::span<const double> x, double rel_slack = 1e-12) const;

 private:
  double radius_;
};

bool all_finite(std::span<const double> values);
bool all_finite(const RealMatrix& m);

double l1_norm(std::span<const double> x);

/// Euclidean projection of `v` onto the l1 ball of radius `r`, written to
/// `out` (which may alias `v`). Sort-and-threshold: O(d log d).
///
/// Feasible inputs are copied through untouched. Throws InvalidArgument on a
/// negative radius or non-finite input.
void project_l1_ball(std::span<const double> v, double r, std::span<double> out);
RealVector project_l1_ball(const RealVector& v, double r);

/// Soft-threshold level tau for which sum(max(|v_i| - tau, 0)) == r, or 0 when
/// v is already feasible.
double l1_projection_threshold(std::span<const double> v, double r);

/// ||M||_2 by power iteration on M^T M from a fixed start vector.
/// Returns sigma with |sigma - ||M||_2| <= tol * ||M||_2 on convergence;
/// throws ConvergenceFailure (carrying the last estimate) after
/// max(10 * cols, 1000) iterations.
double spectral_norm(const RealMatrix& m, double tol);

/// max |lambda_i| of a symmetric matrix via a full eigendecomposition.
double spectral_norm_symmetric_exact(const RealMatrix& m);

bool is_symmetric(const RealMatrix& m, double tol = 0.0);

}  // namespace netlasso
