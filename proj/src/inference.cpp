#include "probprec/inference.hpp"

#include <cmath>
#include <sstream>

#include "probprec/errors.hpp"

namespace probprec {
namespace {

// Probe column j is rejected as dependent when its distance to the span of
// s_0..s_{j-1} falls below this fraction of its norm.
constexpr double kDependenceTolerance = 1e-10;

void require_shape(const Matrix& S, const Matrix& Y, Index n) {
  if (S.rows() != n || Y.rows() != n || S.cols() != Y.cols()) {
    std::ostringstream os;
    os << "observation shapes disagree: S is " << S.rows() << "x" << S.cols() << ", Y is "
       << Y.rows() << "x" << Y.cols() << ", prior dimension " << n;
    throw InvalidArgument(os.str());
  }
}

}  // namespace

void MatrixPrior::validate() const {
  if (n < 1) throw InvalidArgument("matrix prior dimension must be at least 1");
  if (!(w0 > 0.0) || !std::isfinite(w0)) throw InvalidArgument("prior scale w0 must be finite and positive");
  if (!std::isfinite(b0)) throw InvalidArgument("prior mean b0 must be finite");
}

void NoiseModel::validate() const {
  if (!(lambda0 >= 0.0) || !std::isfinite(lambda0)) {
    throw InvalidArgument("noise scale lambda0 must be finite and non-negative");
  }
}

ObservationSet ObservationSet::make(Matrix S, Matrix Y, const NoiseModel& noise) {
  noise.validate();
  ObservationSet obs;
  obs.noise_diag = noise.lambda0 * S.colwise().squaredNorm().transpose();
  obs.S = std::move(S);
  obs.Y = std::move(Y);
  obs.validate();
  return obs;
}

void ObservationSet::append(const Vector& s, const Vector& y, const NoiseModel& noise) {
  if (S.cols() == 0 && S.rows() == 0) {
    S.resize(s.size(), 0);
    Y.resize(s.size(), 0);
  }
  if (s.size() != S.rows() || y.size() != S.rows()) {
    throw InvalidArgument("appended probe / product length does not match the observation set");
  }
  const Index m = S.cols();
  S.conservativeResize(Eigen::NoChange, m + 1);
  Y.conservativeResize(Eigen::NoChange, m + 1);
  noise_diag.conservativeResize(m + 1);
  S.col(m) = s;
  Y.col(m) = y;
  noise_diag(m) = noise.lambda0 * s.squaredNorm();
}

void ObservationSet::validate() const {
  if (S.rows() != Y.rows() || S.cols() != Y.cols()) {
    throw InvalidArgument("probe matrix S and products Y must have the same shape");
  }
  if (noise_diag.size() != S.cols()) throw InvalidArgument("noise_diag must have one entry per probe");
  if (!S.allFinite() || !Y.allFinite() || !noise_diag.allFinite()) {
    throw InvalidArgument("observations contain non-finite entries");
  }
  for (Index i = 0; i < S.cols(); ++i) {
    if (S.col(i).squaredNorm() == 0.0) {
      std::ostringstream os;
      os << "probe column " << i << " is zero";
      throw InvalidArgument(os.str());
    }
    if (noise_diag(i) < 0.0) throw InvalidArgument("noise_diag entries must be non-negative");
  }
}

PosteriorMean::PosteriorMean(const MatrixPrior& prior)
    : PosteriorMean(prior, Matrix(prior.n, 0), Matrix(prior.n, 0)) {}

PosteriorMean::PosteriorMean(const MatrixPrior& prior, Matrix A, Matrix C)
    : prior_(prior), factors_{std::move(A), std::move(C)} {
  prior_.validate();
  factors_.validate();
  if (factors_.dimension() != prior_.n) {
    throw InvalidArgument("posterior factors do not match the prior dimension");
  }
}

Vector PosteriorMean::apply(const Vector& v) const {
  if (v.size() != prior_.n) {
    std::ostringstream os;
    os << "apply: vector has length " << v.size() << ", expected " << prior_.n;
    throw InvalidArgument(os.str());
  }
  Vector out = prior_.b0 * v;
  if (rank() > 0) out.noalias() += factors_.A * (factors_.C.transpose() * v);
  return out;
}

Vector PosteriorMean::solve(const Vector& v) const {
  if (v.size() != prior_.n) {
    std::ostringstream os;
    os << "solve: vector has length " << v.size() << ", expected " << prior_.n;
    throw InvalidArgument(os.str());
  }
  return woodbury_solve(prior_.b0, factors_, v);
}

Matrix PosteriorMean::dense() const {
  Matrix out = factors_.A * factors_.C.transpose();
  out.diagonal().array() += prior_.b0;
  return out;
}

PosteriorMean infer_noise_free(const MatrixPrior& prior, const Matrix& S, const Matrix& Y) {
  prior.validate();
  require_shape(S, Y, prior.n);
  const Index m = S.cols();
  if (m == 0) return PosteriorMean(prior);
  if (m > prior.n) {
    std::ostringstream os;
    os << "noise-free inference needs linearly independent probes, but " << m
       << " probes exceed dimension " << prior.n;
    throw RankDeficient(os.str(), static_cast<long>(prior.n));
  }

  // S = Q R; |R_jj| is the distance of s_j from span(s_0..s_{j-1}).
  Eigen::HouseholderQR<Matrix> qr(S);
  const Matrix R = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
  for (Index j = 0; j < m; ++j) {
    const double norm = S.col(j).norm();
    if (!(std::abs(R(j, j)) > kDependenceTolerance * norm)) {
      std::ostringstream os;
      os << "probe column " << j << " is linearly dependent on the preceding probes";
      throw RankDeficient(os.str(), static_cast<long>(j));
    }
  }

  // X = W^{-1} Delta (S^T W S)^{-1} with W = w0 I, so
  // A = W X = Delta (S^T S)^{-1} / w0 and C = W S = w0 S.
  const Matrix delta = Y - prior.b0 * S;
  const auto upper = R.triangularView<Eigen::Upper>();
  // Delta (R^T R)^{-1} = ((R^T R)^{-1} Delta^T)^T
  Matrix tmp = upper.transpose().solve(delta.transpose());
  tmp = upper.solve(tmp);
  return PosteriorMean(prior, tmp.transpose() / prior.w0, prior.w0 * S);
}

PosteriorMean infer_noisy(const MatrixPrior& prior, const NoiseModel& noise,
                          const ObservationSet& observations) {
  prior.validate();
  noise.validate();
  observations.validate();
  require_shape(observations.S, observations.Y, prior.n);
  if (noise.lambda0 == 0.0) return infer_noise_free(prior, observations.S, observations.Y);

  const Index m = observations.count();
  if (m == 0) return PosteriorMean(prior);

  const double w0 = prior.w0;
  const double lambda0 = noise.lambda0;
  const Matrix& S = observations.S;

  // Right pencil (S^T W S, diag(noise_diag)).
  const Matrix gram = w0 * (S.transpose() * S);
  const Matrix right_noise = observations.noise_diag.asDiagonal();
  const GeneralizedEigenResult right = generalized_sym_eig(gram, right_noise);

  // Left pencil in closed form: U = I / sqrt(lambda0), D = w0 / lambda0.
  const double u_scale = 1.0 / std::sqrt(lambda0);
  const double d_left = w0 / lambda0;

  const Matrix delta = observations.Y - prior.b0 * S;
  Matrix psi = u_scale * (delta * right.vectors);  // U^T Delta V
  for (Index i = 0; i < m; ++i) {
    psi.col(i) /= d_left * right.values(i) + 1.0;
  }
  const Matrix X = u_scale * (psi * right.vectors.transpose());
  if (m > prior.n) {
    // More (necessarily dependent) probes than dimensions: store the product
    // itself so the factors keep at most N columns.
    return PosteriorMean(prior, (w0 * w0) * (X * S.transpose()), Matrix::Identity(prior.n, prior.n));
  }
  return PosteriorMean(prior, w0 * X, w0 * S);
}

}  // namespace probprec
