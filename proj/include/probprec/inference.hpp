#pragma once

// Matrix-variate Gaussian inference on a latent square matrix B from
// projections Y = B~ S. The prior is N(B; b0 I, W (x) W) with W = w0 I and the
// observation noise has Kronecker structure Lambda (x) diag(s_i^T Lambda s_i)
// with Lambda = lambda0 I, one independent batch per probe column.

#include "probprec/linalg.hpp"

namespace probprec {

struct MatrixPrior {
  double b0 = 1.0;  // prior mean B0 = b0 I
  double w0 = 1.0;  // prior covariance factor W = w0 I
  Index n = 0;

  void validate() const;
};

struct NoiseModel {
  double lambda0 = 0.0;  // Lambda = lambda0 I

  void validate() const;
};

/// Probes S, observed products Y and the diagonal of the right noise factor.
struct ObservationSet {
  Matrix S;
  Matrix Y;
  Vector noise_diag;  // (S^T Lambda S)_ii = lambda0 * ||s_i||^2

  static ObservationSet make(Matrix S, Matrix Y, const NoiseModel& noise);

  Index dimension() const { return S.rows(); }
  Index count() const { return S.cols(); }
  /// Appends one probe / product pair, extending noise_diag accordingly.
  void append(const Vector& s, const Vector& y, const NoiseModel& noise);
  void validate() const;
};

/// B_m = b0 I + A C^T with A = W X and C = W S.
class PosteriorMean {
 public:
  PosteriorMean() = default;
  /// The prior mean itself (no observations).
  explicit PosteriorMean(const MatrixPrior& prior);
  PosteriorMean(const MatrixPrior& prior, Matrix A, Matrix C);

  const MatrixPrior& prior() const { return prior_; }
  const Matrix& A() const { return factors_.A; }
  const Matrix& C() const { return factors_.C; }
  const LowRankFactors& factors() const { return factors_; }
  Index dimension() const { return prior_.n; }
  Index rank() const { return factors_.rank(); }

  /// b0 v + A (C^T v), O(N m).
  Vector apply(const Vector& v) const;
  /// B_m^{-1} v through woodbury_solve; throws SingularMatrix on failure.
  Vector solve(const Vector& v) const;
  /// Explicit N x N matrix. Test and small-problem use only.
  Matrix dense() const;

 private:
  MatrixPrior prior_;
  LowRankFactors factors_;
};

/// Noise-free posterior mean B0 + (Y - B0 S)(S^T W S)^{-1} S^T W. Throws
/// RankDeficient naming the first probe column that lies (numerically) in the
/// span of its predecessors.
PosteriorMean infer_noise_free(const MatrixPrior& prior, const Matrix& S, const Matrix& Y);

/// Posterior mean under Kronecker-structured observation noise.
///
/// X solves  W X (S^T W S) + Lambda X R = Delta,  R = diag(noise_diag),
/// Delta = Y - B0 S, which is (W (x) S^T W S + Lambda (x) R) vec(X) = vec(Delta)
/// written with row-major vec. Both Kronecker factors are diagonalized by
/// generalized eigendecompositions:
///   left   W U = Lambda U D,  U^T Lambda U = I
///   right  (S^T W S) V = R V Omega,  V^T R V = I
/// and then X = U Psi V^T with Psi_ji = (U^T Delta V)_ji / (D_jj Omega_ii + 1).
///
/// For W = w0 I and Lambda = lambda0 I the left pencil has the closed form
/// U = I / sqrt(lambda0), D = (w0 / lambda0) I, so it is never materialized:
/// U^T Delta V = Delta V / sqrt(lambda0) and U Psi V^T = Psi V^T / sqrt(lambda0).
/// Only the m x m right pencil is decomposed, making the cost O(N m^2 + m^3).
///
/// lambda0 == 0 delegates to infer_noise_free. With more probes than dimensions
/// (m > N) the factors are compressed to A = W X S^T W, C = I.
PosteriorMean infer_noisy(const MatrixPrior& prior, const NoiseModel& noise,
                          const ObservationSet& observations);

}  // namespace probprec
