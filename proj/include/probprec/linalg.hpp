#pragma once

// Dense kernels used by the inference and pre-conditioning layers. Every
// matrix here is either small and square (m x m, m <= 64) or tall and
// skinny (N x m), so O(m^3) algorithms are always acceptable.

#include <Eigen/Dense>

namespace probprec {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Represents the N x N product A * C^T without forming it.
struct LowRankFactors {
  Matrix A;
  Matrix C;

  Index dimension() const { return A.rows(); }
  Index rank() const { return A.cols(); }
  /// Throws InvalidArgument if A and C disagree in shape or m > N.
  void validate() const;
};

struct SymEigResult {
  Vector values;   // descending
  Matrix vectors;  // orthonormal columns, vectors.col(i) pairs with values(i)
};

/// Solution of G V = R V diag(values) with V^T R V = I.
struct GeneralizedEigenResult {
  Vector values;   // descending
  Matrix vectors;
};

struct ThinSvd {
  Matrix U;               // N x m, orthonormal columns
  Vector singular_values; // m entries, descending, >= 0
  Matrix V;               // N x m, orthonormal columns
};

/// Lower Cholesky factor of an SPD matrix. Throws NotPositiveDefinite with the
/// 0-based index of the first pivot that is not safely positive.
Matrix cholesky_lower(const Matrix& M);

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Rejects input whose asymmetry exceeds 1e-10 * ||M||_F.
SymEigResult sym_eig(const Matrix& M);

/// Symmetric-definite pencil (G, R): Cholesky R = L L^T, then sym_eig of
/// L^{-1} G L^{-T}, and V = L^{-T} Q.
GeneralizedEigenResult generalized_sym_eig(const Matrix& G, const Matrix& R);

/// SVD of A C^T in O(N m^2): thin QR of both factors, SVD of the m x m core
/// R_A R_C^T, then rotate the core singular vectors back.
ThinSvd thin_svd_product(const LowRankFactors& factors);

/// Solves (b0 I + A C^T) x = rhs by the matrix inversion lemma:
///   x = rhs / b0 - A K^{-1} C^T rhs / b0^2,   K = I_m + C^T A / b0.
/// Throws SingularMatrix (carrying a condition estimate of K) when K cannot be
/// inverted reliably.
Vector woodbury_solve(double b0, const LowRankFactors& factors, const Vector& rhs);

}  // namespace probprec
