#pragma once

#include <cstdint>
#include <functional>

#include "probprec/problems.hpp"

namespace probprec {

/// Called after each iteration with the current estimate and cumulative data
/// read. Returning false stops the method early.
using IterateCallback = std::function<bool(std::size_t iteration, const Vector& w, std::uint64_t data_read)>;

/// Running average of per-batch regularized least-squares solutions
///   w_b = (alpha I + Phi_b Phi_b^T / |b|)^{-1} Phi_b y_b / |b|.
/// Batches smaller than the feature dimension are inverted with the Woodbury
/// identity (a |b| x |b| system); larger ones are solved in feature space.
/// Batches whose system is singular are skipped with a warning.
Vector avg_inv_baseline(const QuadraticProblem& problem, std::size_t batch_size, std::size_t n_batches,
                        std::uint64_t seed, const IterateCallback& callback = {});

struct CgResult {
  Vector w;
  std::size_t iterations = 0;
  bool diverged = false;  // a non-finite iterate or step was produced
};

/// Textbook CG on B w = b from w = 0 where every product with B is a fresh
/// noisy_hvp. Stops early on a non-finite value or an exactly zero residual.
CgResult cg_baseline(HessianOracle& oracle, const Vector& b, std::size_t iters,
                     const IterateCallback& callback = {});

struct NewtonResult {
  Vector w;
  std::size_t iterations = 0;
  double gradient_norm = 0.0;
};

/// Damped Newton on the full logistic objective with Armijo backtracking.
NewtonResult newton_logistic(const LogisticProblem& problem, double tolerance = 1e-10,
                             std::size_t max_iterations = 100, const IterateCallback& callback = {});

}  // namespace probprec
