#include "probprec/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

#include "probprec/errors.hpp"

namespace probprec {
namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr int kMaxJacobiSweeps = 100;

void require_square(const Matrix& M, const char* name) {
  if (M.rows() != M.cols()) {
    std::ostringstream os;
    os << name << " must be square, got " << M.rows() << "x" << M.cols();
    throw InvalidArgument(os.str());
  }
}

void require_finite(const Matrix& M, const char* name) {
  if (!M.allFinite()) throw InvalidArgument(std::string(name) + " has non-finite entries");
}

// Stable descending order of `values`.
std::vector<Index> descending_order(const Vector& values) {
  std::vector<Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return values(a) > values(b); });
  return order;
}

// One Jacobi rotation zeroing a(p, q). Updates the symmetric working matrix in
// place and accumulates the rotation into Q.
void jacobi_rotate(Matrix& a, Matrix& Q, Index p, Index q) {
  const double apq = a(p, q);
  const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
  const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(1.0 + theta * theta));
  const double c = 1.0 / std::sqrt(1.0 + t * t);
  const double s = t * c;

  const Index n = a.rows();
  for (Index k = 0; k < n; ++k) {
    const double akp = a(k, p);
    const double akq = a(k, q);
    a(k, p) = c * akp - s * akq;
    a(k, q) = s * akp + c * akq;
  }
  for (Index k = 0; k < n; ++k) {
    const double apk = a(p, k);
    const double aqk = a(q, k);
    a(p, k) = c * apk - s * aqk;
    a(q, k) = s * apk + c * aqk;
  }
  a(p, q) = 0.0;
  a(q, p) = 0.0;
  for (Index k = 0; k < n; ++k) {
    const double qkp = Q(k, p);
    const double qkq = Q(k, q);
    Q(k, p) = c * qkp - s * qkq;
    Q(k, q) = s * qkp + c * qkq;
  }
}

}  // namespace

void LowRankFactors::validate() const {
  if (A.rows() != C.rows() || A.cols() != C.cols()) {
    std::ostringstream os;
    os << "low-rank factors disagree in shape: A is " << A.rows() << "x" << A.cols()
       << ", C is " << C.rows() << "x" << C.cols();
    throw InvalidArgument(os.str());
  }
  if (A.cols() > A.rows()) {
    std::ostringstream os;
    os << "low-rank factors have more columns (" << A.cols() << ") than rows (" << A.rows() << ")";
    throw InvalidArgument(os.str());
  }
}

Matrix cholesky_lower(const Matrix& M) {
  require_square(M, "Cholesky input");
  require_finite(M, "Cholesky input");
  const Index n = M.rows();
  const double scale = n > 0 ? M.diagonal().cwiseAbs().maxCoeff() : 0.0;
  const double floor = 64.0 * kEps * scale;

  Matrix L = Matrix::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    double d = M(j, j) - L.row(j).head(j).squaredNorm();
    if (!(d > floor)) {
      std::ostringstream os;
      os << "matrix is not positive definite: pivot " << j << " is " << d;
      throw NotPositiveDefinite(os.str(), static_cast<long>(j));
    }
    d = std::sqrt(d);
    L(j, j) = d;
    for (Index i = j + 1; i < n; ++i) {
      L(i, j) = (M(i, j) - L.row(i).head(j).dot(L.row(j).head(j))) / d;
    }
  }
  return L;
}

SymEigResult sym_eig(const Matrix& M) {
  require_square(M, "sym_eig input");
  require_finite(M, "sym_eig input");
  const Index n = M.rows();
  const double norm = M.norm();
  const double asym = (M - M.transpose()).norm();
  if (asym > 1e-10 * norm) {
    std::ostringstream os;
    os << "sym_eig input is not symmetric: ||M - M^T||_F = " << asym
       << " exceeds 1e-10 * ||M||_F = " << 1e-10 * norm;
    throw InvalidArgument(os.str());
  }

  Matrix a = 0.5 * (M + M.transpose());
  Matrix Q = Matrix::Identity(n, n);
  const double tiny = std::numeric_limits<double>::min() / kEps;

  for (int sweep = 0; sweep < kMaxJacobiSweeps; ++sweep) {
    bool rotated = false;
    for (Index p = 0; p < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const double apq = std::abs(a(p, q));
        // Relative criterion keeps small eigenvalues accurate; the absolute
        // floor stops sweeps on entries that are negligible against ||M||.
        const double threshold = std::max(
            kEps * std::sqrt(std::abs(a(p, p)) * std::abs(a(q, q))),
            std::max(kEps * 1e-3 * norm, tiny));
        if (apq <= threshold) {
          a(p, q) = 0.0;
          a(q, p) = 0.0;
          continue;
        }
        jacobi_rotate(a, Q, p, q);
        rotated = true;
      }
    }
    if (!rotated) break;
  }

  const Vector diag = a.diagonal();
  const auto order = descending_order(diag);
  SymEigResult out{Vector(n), Matrix(n, n)};
  for (Index i = 0; i < n; ++i) {
    out.values(i) = diag(order[static_cast<std::size_t>(i)]);
    out.vectors.col(i) = Q.col(order[static_cast<std::size_t>(i)]);
  }
  return out;
}

GeneralizedEigenResult generalized_sym_eig(const Matrix& G, const Matrix& R) {
  require_square(G, "pencil matrix G");
  require_square(R, "pencil matrix R");
  if (G.rows() != R.rows()) throw InvalidArgument("pencil matrices G and R differ in size");

  const Matrix L = cholesky_lower(R);
  const auto lower = L.triangularView<Eigen::Lower>();
  // C = L^{-1} G L^{-T}
  Matrix tmp = lower.solve(G);
  Matrix reduced = lower.solve(tmp.transpose());
  reduced = 0.5 * (reduced + reduced.transpose());

  SymEigResult standard = sym_eig(reduced);
  GeneralizedEigenResult out;
  out.values = std::move(standard.values);
  out.vectors = L.transpose().triangularView<Eigen::Upper>().solve(standard.vectors);
  return out;
}

ThinSvd thin_svd_product(const LowRankFactors& factors) {
  factors.validate();
  const Index n = factors.dimension();
  const Index m = factors.rank();
  if (!factors.A.allFinite() || !factors.C.allFinite()) {
    throw InvalidArgument("low-rank factors have non-finite entries");
  }
  if (m == 0) return ThinSvd{Matrix(n, 0), Vector(0), Matrix(n, 0)};

  Eigen::HouseholderQR<Matrix> qr_a(factors.A);
  Eigen::HouseholderQR<Matrix> qr_c(factors.C);
  const Matrix thin_identity = Matrix::Identity(n, m);
  const Matrix Qa = qr_a.householderQ() * thin_identity;
  const Matrix Qc = qr_c.householderQ() * thin_identity;
  const Matrix Ra = qr_a.matrixQR().topRows(m).triangularView<Eigen::Upper>();
  const Matrix Rc = qr_c.matrixQR().topRows(m).triangularView<Eigen::Upper>();

  Eigen::JacobiSVD<Matrix> core(Ra * Rc.transpose(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  return ThinSvd{Qa * core.matrixU(), core.singularValues(), Qc * core.matrixV()};
}

Vector woodbury_solve(double b0, const LowRankFactors& factors, const Vector& rhs) {
  if (!(b0 > 0.0) || !std::isfinite(b0)) {
    throw InvalidArgument("woodbury_solve requires a finite positive diagonal scale b0");
  }
  factors.validate();
  if (rhs.size() != factors.dimension()) {
    std::ostringstream os;
    os << "woodbury_solve: rhs has length " << rhs.size() << ", expected " << factors.dimension();
    throw InvalidArgument(os.str());
  }
  const Index m = factors.rank();
  if (m == 0) return rhs / b0;

  const Matrix capacitance = Matrix::Identity(m, m) + factors.C.transpose() * factors.A / b0;
  Eigen::FullPivLU<Matrix> lu(capacitance);
  const double rcond = lu.rcond();
  if (!lu.isInvertible() || !(rcond > 1e-14)) {
    const double cond = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
    std::ostringstream os;
    os << "Woodbury capacitance matrix is singular (condition estimate " << cond << ")";
    throw SingularMatrix(os.str(), cond);
  }
  const Vector projected = factors.C.transpose() * rhs;
  return rhs / b0 - factors.A * lu.solve(projected) / (b0 * b0);
}

}  // namespace probprec
