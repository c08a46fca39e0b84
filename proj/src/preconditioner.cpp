#include "probprec/preconditioner.hpp"

#include <cmath>
#include <sstream>

#include "probprec/errors.hpp"
#include "probprec/log.hpp"

namespace probprec {
namespace {

constexpr double kRankTolerance = 1e-12;

}  // namespace

double SpectralApprox::condition_ratio() const {
  if (sigma.size() == 0) return 1.0;
  return sigma(0) / sigma(sigma.size() - 1);
}

SpectralApprox reduce_rank(const PosteriorMean& posterior, Index k) {
  const Index m = posterior.rank();
  if (k < 1 || k > m) {
    std::ostringstream os;
    os << "reduce_rank: requested rank " << k << " outside [1, " << m << "]";
    throw InvalidArgument(os.str());
  }
  const ThinSvd svd = thin_svd_product(posterior.factors());

  Index keep = k;
  const double top = svd.singular_values(0);
  while (keep > 0 && !(svd.singular_values(keep - 1) > kRankTolerance * top)) --keep;
  if (keep < k) {
    std::ostringstream os;
    os << "reduce_rank: only " << keep << " of the requested " << k
       << " singular values exceed 1e-12 * sigma_1; rank reduced";
    log::warn(os.str());
  }
  return SpectralApprox{svd.U.leftCols(keep), svd.singular_values.head(keep)};
}

Preconditioner::Preconditioner(SpectralApprox spectral, double alpha, double beta)
    : spectral_(std::move(spectral)), alpha_(alpha), beta_(beta) {
  if (!(alpha_ > 0.0) || !std::isfinite(alpha_)) throw InvalidArgument("pre-conditioner alpha must be positive");
  if (!(beta_ > 0.0) || !std::isfinite(beta_)) throw InvalidArgument("pre-conditioner beta must be positive");
  if (spectral_.sigma.size() != spectral_.U.cols()) {
    throw InvalidArgument("pre-conditioner: sigma and U disagree in rank");
  }
  for (Index i = 0; i < spectral_.sigma.size(); ++i) {
    if (!(spectral_.sigma(i) > 0.0)) throw InvalidArgument("pre-conditioner: sigma must be positive");
  }
  weights_ = (beta_ * beta_) * spectral_.sigma.cwiseInverse();
  weights_.array() -= 1.0;
}

Vector Preconditioner::apply_p_squared(const Vector& g, std::uint64_t* flops) const {
  if (g.size() != dimension()) {
    std::ostringstream os;
    os << "apply_p_squared: vector has length " << g.size() << ", expected " << dimension();
    throw InvalidArgument(os.str());
  }
  const double alpha2 = alpha_ * alpha_;
  const Index n = dimension();
  const Index k = rank();
  if (k == 0) {
    if (flops) *flops += static_cast<std::uint64_t>(n);
    return alpha2 * g;
  }
  // P^2 = alpha^2 (I + U diag(beta^2 / sigma - 1) U^T) since U^T U = I.
  const Vector coeffs = (spectral_.U.transpose() * g).cwiseProduct(weights_);
  Vector out = g;
  out.noalias() += spectral_.U * coeffs;
  out *= alpha2;
  if (flops) *flops += static_cast<std::uint64_t>(4 * n * k + k + 2 * n);
  return out;
}

Matrix Preconditioner::dense() const {
  const Index n = dimension();
  Vector inner = beta_ * spectral_.sigma.cwiseSqrt().cwiseInverse();
  inner.array() -= 1.0;
  Matrix P = Matrix::Identity(n, n);
  P.noalias() += spectral_.U * inner.asDiagonal() * spectral_.U.transpose();
  return alpha_ * P;
}

BuiltPreconditioner build_preconditioner(const SpectralApprox& spectral, double beta, double base_lr) {
  const double alpha = std::sqrt(spectral.condition_ratio());
  return BuiltPreconditioner{Preconditioner(spectral, alpha, beta), base_lr};
}

ScalarStep scalar_step(const PriorEstimates& estimates) {
  const double eta = 1.0 / estimates.b0;
  if (!(eta > 0.0) || !std::isfinite(eta)) {
    std::ostringstream os;
    os << "scalar_step: estimate 1/b0 = " << eta << " is not a positive finite step";
    throw NumericalError(os.str());
  }
  return ScalarStep{eta};
}

}  // namespace probprec
