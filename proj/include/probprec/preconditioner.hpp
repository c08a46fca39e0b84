#pragma once

#include <cstdint>

#include "probprec/active_solver.hpp"
#include "probprec/inference.hpp"

namespace probprec {

/// Rank-k symmetric Hessian estimate B ~ U diag(sigma) U^T.
struct SpectralApprox {
  Matrix U;      // N x k, orthonormal columns
  Vector sigma;  // k values, descending, positive

  Index dimension() const { return U.rows(); }
  Index rank() const { return U.cols(); }
  /// sigma_1 / sigma_k, or 1 for an empty approximation.
  double condition_ratio() const;
};

/// Keeps the top-k left singular vectors and singular values of the low-rank
/// part A C^T of the posterior. Trailing values below 1e-12 * sigma_1 are
/// dropped with a warning, so the result may have rank < k.
SpectralApprox reduce_rank(const PosteriorMean& posterior, Index k);

/// P = alpha (I + U [beta diag(sigma)^{-1/2} - I] U^T) with alpha^2 = sigma_1 / sigma_k.
///
/// The step-size inflation by alpha^2 lives inside P, so an optimizer applies
/// w <- w - eta P^2 g with its unmodified eta.
class Preconditioner {
 public:
  Preconditioner() = default;
  Preconditioner(SpectralApprox spectral, double alpha, double beta);

  const SpectralApprox& spectral() const { return spectral_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  Index dimension() const { return spectral_.dimension(); }
  Index rank() const { return spectral_.rank(); }

  /// alpha^2 (g - U U^T g + U diag(beta^2 / sigma) U^T g), O(N k).
  /// When `flops` is given, the arithmetic operations performed are added to it.
  Vector apply_p_squared(const Vector& g, std::uint64_t* flops = nullptr) const;
  /// Explicit P. Tests only.
  Matrix dense() const;

 private:
  SpectralApprox spectral_;
  double alpha_ = 1.0;
  double beta_ = 1.0;
  Vector weights_;  // beta^2 / sigma - 1
};

struct BuiltPreconditioner {
  Preconditioner preconditioner;
  double scaled_lr = 0.0;  // equals the base rate; alpha^2 is already inside P
};

BuiltPreconditioner build_preconditioner(const SpectralApprox& spectral, double beta, double base_lr);

/// Step length 1 / b0 from scalar-mode estimates.
struct ScalarStep {
  double eta = 0.0;
};

/// Throws NumericalError when the estimate is not a finite positive step.
ScalarStep scalar_step(const PriorEstimates& estimates);

}  // namespace probprec
