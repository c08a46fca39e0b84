#include "probprec/baselines.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <sstream>

#include "probprec/errors.hpp"
#include "probprec/log.hpp"

namespace probprec {

Vector avg_inv_baseline(const QuadraticProblem& problem, std::size_t batch_size, std::size_t n_batches,
                        std::uint64_t seed, const IterateCallback& callback) {
  if (n_batches == 0) throw InvalidArgument("avg_inv_baseline: n_batches must be positive");
  BatchSampler sampler(problem.num_train(), batch_size, seed);
  const Index n = problem.dimension();
  const double alpha = problem.alpha_reg();
  const auto m = static_cast<Index>(batch_size);

  Vector sum = Vector::Zero(n);
  std::size_t used = 0;
  std::uint64_t data_read = 0;
  for (std::size_t t = 0; t < n_batches; ++t) {
    const Batch batch = sampler.draw();
    data_read += batch_size;
    Matrix phi(n, m);
    Vector y(m);
    for (Index i = 0; i < m; ++i) {
      phi.col(i) = problem.features().col(batch.indices[static_cast<std::size_t>(i)]);
      y(i) = problem.targets()(batch.indices[static_cast<std::size_t>(i)]);
    }
    const Vector rhs = phi * y / static_cast<double>(m);
    try {
      Vector w;
      if (m <= n) {
        LowRankFactors f{phi / static_cast<double>(m), phi};
        w = woodbury_solve(alpha, f, rhs);
      } else {
        Matrix Bb = alpha * Matrix::Identity(n, n);
        Bb.selfadjointView<Eigen::Lower>().rankUpdate(phi, 1.0 / static_cast<double>(m));
        Eigen::LLT<Matrix, Eigen::Lower> llt(Bb);
        if (llt.info() != Eigen::Success) throw SingularMatrix("batch matrix is not SPD", INFINITY);
        w = llt.solve(rhs);
      }
      if (!w.allFinite()) throw NumericalError("non-finite batch solution");
      sum += w;
      ++used;
    } catch (const NumericalError& e) {
      std::ostringstream os;
      os << "avg-inv: skipping batch " << t << " (" << e.what() << ")";
      log::warn(os.str());
    }
    if (callback && !callback(t + 1, used ? Vector(sum / static_cast<double>(used)) : Vector(Vector::Zero(n)), data_read)) {
      break;
    }
  }
  if (used == 0) throw NumericalError("avg_inv_baseline: every batch was singular");
  return sum / static_cast<double>(used);
}

CgResult cg_baseline(HessianOracle& oracle, const Vector& b, std::size_t iters,
                     const IterateCallback& callback) {
  const Index n = oracle.dimension();
  if (b.size() != n) throw InvalidArgument("cg_baseline: right-hand side has the wrong length");
  CgResult result;
  result.w = Vector::Zero(n);
  Vector r = b;
  Vector p = r;
  double rr = r.squaredNorm();
  for (std::size_t k = 0; k < iters; ++k) {
    if (rr == 0.0) break;
    const Vector q = oracle.noisy_hvp(result.w, p);
    const double step = rr / p.dot(q);
    result.w += step * p;
    r -= step * q;
    const double rr_next = r.squaredNorm();
    p = r + (rr_next / rr) * p;
    rr = rr_next;
    result.iterations = k + 1;
    if (!std::isfinite(step) || !result.w.allFinite() || !std::isfinite(rr)) result.diverged = true;
    if (callback && !callback(k + 1, result.w, oracle.data_read())) break;
    if (result.diverged) break;
  }
  return result;
}

NewtonResult newton_logistic(const LogisticProblem& problem, double tolerance, std::size_t max_iterations,
                             const IterateCallback& callback) {
  NewtonResult result;
  result.w = Vector::Zero(problem.dimension());
  const auto pass = static_cast<std::uint64_t>(problem.num_train());
  std::uint64_t data_read = 0;
  double loss = problem.train_loss(result.w);
  for (std::size_t k = 0; k < max_iterations; ++k) {
    const Vector g = problem.full_gradient(result.w);
    result.gradient_norm = g.norm();
    if (result.gradient_norm <= tolerance) break;
    const Vector dir = -Eigen::LLT<Matrix>(problem.full_hessian(result.w)).solve(g);
    data_read += pass;
    double t = 1.0;
    const double slope = g.dot(dir);
    Vector trial = result.w + dir;
    double trial_loss = problem.train_loss(trial);
    while (trial_loss > loss + 1e-4 * t * slope && t > 1e-12) {
      t *= 0.5;
      trial = result.w + t * dir;
      trial_loss = problem.train_loss(trial);
    }
    result.w = std::move(trial);
    loss = trial_loss;
    result.iterations = k + 1;
    if (callback && !callback(k + 1, result.w, data_read)) break;
  }
  result.gradient_norm = problem.full_gradient(result.w).norm();
  return result;
}

}  // namespace probprec
