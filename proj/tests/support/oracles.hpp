#pragma once

// Independent reference computations for the test suites. Nothing here calls
// into the code paths it is used to check.

#include <functional>
#include <random>

#include "probprec/linalg.hpp"

namespace probprec::testing {

using Rng = std::mt19937_64;

Matrix random_matrix(Index rows, Index cols, Rng& rng);
Vector random_vector(Index n, Rng& rng);
Matrix random_symmetric(Index n, Rng& rng);
Matrix random_orthogonal(Index n, Rng& rng);
/// SPD matrix with eigenvalues log-spaced in [1, cond] (rotated by a random orthogonal matrix).
Matrix random_spd(Index n, Rng& rng, double cond = 100.0);
/// SPD matrix Q diag(eigenvalues) Q^T with a random orthogonal Q, also returning Q.
Matrix spd_with_spectrum(const Vector& eigenvalues, Rng& rng, Matrix* eigenvectors = nullptr);

/// Kronecker product of two dense matrices.
Matrix kron(const Matrix& a, const Matrix& b);
/// Row-major vectorization (the convention under which vec(A X B^T) = (A (x) B) vec(X)).
Vector vec_rows(const Matrix& X);
Matrix unvec_rows(const Vector& v, Index rows, Index cols);

/// Solves (W (x) S^T W S + Lambda (x) diag(lambda0 ||s_i||^2)) vec(X) = vec(Y - b0 S)
/// by forming the (N m) x (N m) system explicitly and LU-factorizing it.
Matrix dense_kronecker_solve(double b0, double w0, double lambda0, const Matrix& S, const Matrix& Y);

/// Largest principal angle (radians) between the column spans of A and B.
double max_principal_angle(const Matrix& A, const Matrix& B);

/// Central finite difference of a vector-valued function along direction d.
Vector central_difference(const std::function<Vector(const Vector&)>& f, const Vector& x,
                          const Vector& d, double h);

/// Relative error ||a - b|| / max(||b||, tiny).
double relative_error(const Matrix& a, const Matrix& b);

}  // namespace probprec::testing
