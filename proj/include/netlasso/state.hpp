#pragma once

#include <cstddef>

#include "netlasso/numerics.hpp"

namespace netlasso {

/// Snapshot of a solver after iteration t. Centralized solvers use a single
/// row. For gradient tracking, `tracking` holds G^t and `local_grads` the
/// stacked local gradients at `theta`; the other algorithms leave them empty.
struct SolverState {
  AgentMatrix theta;        // Theta^t
  AgentMatrix half;         // Theta^{t+1/2} (projected step)
  AgentMatrix tracking;     // G^t
  AgentMatrix local_grads;  // rows grad L_i(theta_i^t)
  std::size_t t = 0;
  double gamma = 0.0;
};

}  // namespace netlasso
