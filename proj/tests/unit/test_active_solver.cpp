#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "probprec/active_solver.hpp"
#include "probprec/errors.hpp"
#include "probprec/log.hpp"
#include "support/oracles.hpp"

using namespace probprec;
using namespace probprec::testing;

namespace {

// Quadratic with additive batch noise: gradient B w - b + e_k, product
// (B + E_k) s, where e_k and symmetric E_k are drawn from a stream seeded by the
// batch id. Every evaluation is logged so estimates can be recomputed.
class LoggedNoisyQuadratic final : public HessianOracle {
 public:
  LoggedNoisyQuadratic(Matrix B, Vector b, double noise, std::uint64_t seed)
      : B_(std::move(B)), b_(std::move(b)), noise_(noise), seed_(seed) {}

  Index dimension() const override { return B_.rows(); }
  std::size_t batch_size() const override { return 32; }
  Batch draw_batch() override {
    charge(32);
    return Batch{{static_cast<Index>(counter_++)}};
  }
  Vector gradient(const Vector& w, const Batch& batch) const override {
    Rng rng(seed_ * 7919 + static_cast<std::uint64_t>(batch.indices[0]));
    Vector g = B_ * w - b_ + noise_ * random_vector(dimension(), rng);
    gradients.push_back(g);
    return g;
  }
  Vector hvp(const Vector&, const Vector& s, const Batch& batch) const override {
    Rng rng(seed_ * 7919 + static_cast<std::uint64_t>(batch.indices[0]));
    (void)random_vector(dimension(), rng);
    const Matrix E = random_symmetric(dimension(), rng);
    Vector y = (B_ + noise_ * E) * s;
    products.push_back(y);
    return y;
  }

  mutable std::vector<Vector> gradients;
  mutable std::vector<Vector> products;

 private:
  Matrix B_;
  Vector b_;
  double noise_;
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

Matrix stack(const std::vector<Vector>& cols) {
  Matrix out(cols.front().size(), static_cast<Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) out.col(static_cast<Index>(i)) = cols[i];
  return out;
}

}  // namespace

TEST_CASE("estimates on a noise-free multiple of the identity") {
  Rng rng(201);
  ExactQuadraticOracle oracle(4.0 * Matrix::Identity(5, 5), random_vector(5, rng));
  const Vector w = random_vector(5, rng);
  const auto full = estimate_parameters(oracle, w, 5, EstimationMode::full);
  CHECK(full.b0 == doctest::Approx(2.0));
  CHECK(full.w0 == doctest::Approx(4.0));
  CHECK(full.lambda0 == 0.0);
  const auto scalar = estimate_parameters(oracle, w, 3, EstimationMode::scalar);
  CHECK(scalar.b0 == doctest::Approx(4.0));
  CHECK(scalar.lambda0 == 0.0);
}

TEST_CASE("estimates reproduce a scripted evaluation of the formulas") {
  Rng rng(202);
  Vector spectrum(6);
  spectrum << 9.0, 5.0, 2.0, 1.0, 0.5, 0.2;
  const Matrix B = spd_with_spectrum(spectrum, rng);
  const Vector w = random_vector(6, rng);
  const Vector b = random_vector(6, rng);

  for (auto mode : {EstimationMode::full, EstimationMode::scalar}) {
    LoggedNoisyQuadratic oracle(B, b, 0.3, 17);
    const auto est = estimate_parameters(oracle, w, 10, mode);
    REQUIRE(oracle.gradients.size() == 10);
    REQUIRE(oracle.products.size() == 10);

    // Independent evaluation from the logged samples.
    const Matrix G = stack(oracle.gradients);
    const Matrix Yk = stack(oracle.products);
    Vector s = Vector::Zero(6);
    for (Index k = 0; k < 10; ++k) s += G.col(k);
    s /= 10.0;
    Vector y = Vector::Zero(6);
    for (Index k = 0; k < 10; ++k) y += Yk.col(k);
    y /= 10.0;
    const double sBs = s.dot(y);
    const double sBBs = y.dot(y);
    CHECK(est.w0 == doctest::Approx(sBs / s.dot(s)).epsilon(1e-12));
    if (mode == EstimationMode::full) {
      CHECK(1.0 / est.b0 == doctest::Approx(std::sqrt(sBs / sBBs)).epsilon(1e-12));
      std::vector<double> var;
      for (Index j = 0; j < 6; ++j) {
        double m2 = 0.0;
        for (Index k = 0; k < 10; ++k) m2 += G(j, k) * G(j, k);
        var.push_back(m2 / 10.0 - s(j) * s(j));
      }
      std::sort(var.begin(), var.end());
      const double med = 0.5 * (var[2] + var[3]);
      CHECK(est.lambda0 == doctest::Approx(med / std::sqrt(s.dot(s))).epsilon(1e-9));
    } else {
      CHECK(1.0 / est.b0 == doctest::Approx(sBs / sBBs).epsilon(1e-12));
      double sum_gg = 0.0;
      for (Index k = 0; k < 10; ++k) sum_gg += G.col(k).squaredNorm();
      CHECK(est.lambda0 == doctest::Approx(std::sqrt((sum_gg / 10.0 - s.dot(s)) / 6.0)).epsilon(1e-9));
    }
    CHECK(est.mean_gradient.isApprox(s, 1e-14));
  }
}

TEST_CASE("estimation charges one batch per initial sample") {
  ExactQuadraticOracle oracle(Matrix::Identity(3, 3), Vector::Ones(3), 256);
  (void)estimate_parameters(oracle, Vector::Zero(3), 7, EstimationMode::full);
  CHECK(oracle.data_read() == 7 * 256);
}

TEST_CASE("estimation error paths") {
  ExactQuadraticOracle zero_grad(Matrix::Identity(3, 3), Vector::Zero(3));
  CHECK_THROWS_AS(estimate_parameters(zero_grad, Vector::Zero(3), 3, EstimationMode::full), NumericalError);

  ExactQuadraticOracle negative(-Matrix::Identity(3, 3), Vector::Ones(3));
  CHECK_THROWS_WITH_AS(estimate_parameters(negative, Vector::Zero(3), 3, EstimationMode::full),
                       doctest::Contains("retry"), NumericalError);

  ExactQuadraticOracle ok(Matrix::Identity(3, 3), Vector::Ones(3));
  CHECK_THROWS_AS(estimate_parameters(ok, Vector::Zero(3), 1, EstimationMode::full), InvalidArgument);
}

TEST_CASE("next_direction with the prior mean follows the negative residual") {
  Rng rng(203);
  const Vector r = random_vector(7, rng);
  const PosteriorMean prior(MatrixPrior{3.0, 1.0, 7});
  const auto raw = next_direction(prior, r, false);
  CHECK((raw.s + r / 3.0).norm() <= 1e-14);
  CHECK(raw.raw_norm == doctest::Approx(r.norm() / 3.0));
  const auto unit = next_direction(prior, r, true);
  CHECK(unit.s.norm() == doctest::Approx(1.0));
  CHECK((unit.s + r.normalized()).norm() <= 1e-14);
  CHECK_THROWS_AS(next_direction(prior, Vector::Zero(7), true), InvalidArgument);
}

TEST_CASE("next_direction falls back to the prior when the posterior is singular") {
  Matrix A = Matrix::Zero(3, 1), C = Matrix::Zero(3, 1);
  A(0, 0) = -2.0;
  C(0, 0) = 1.0;
  const PosteriorMean singular(MatrixPrior{2.0, 1.0, 3}, A, C);
  const Vector r = Vector::Ones(3);
  const long before = log::warning_count();
  const auto dir = next_direction(singular, r, false);
  CHECK(dir.fallback);
  CHECK((dir.s + r / 2.0).norm() <= 1e-15);
  CHECK(log::warning_count() == before + 1);
}

TEST_CASE("a single noise-free iteration interpolates its observation") {
  Rng rng(204);
  const Matrix B = random_spd(5, rng);
  ExactQuadraticOracle oracle(B, random_vector(5, rng));
  const Vector w = random_vector(5, rng);
  const auto est = estimate_parameters(oracle, w, 2, EstimationMode::full);
  SolverConfig config;
  config.iterations = 1;
  const auto res = run_inference(oracle, w, est, config);
  REQUIRE(res.completed_iterations == 1);
  const Vector s = res.observations.S.col(0);
  CHECK(relative_error(res.posterior.apply(s), B * s) <= 1e-10);
}

TEST_CASE("noise-free probes span the Krylov space of the gradient") {
  Rng rng(205);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix B = random_spd(6, rng, 20.0);
    ExactQuadraticOracle oracle(B, random_vector(6, rng));
    const Vector w = random_vector(6, rng);
    const auto est = estimate_parameters(oracle, w, 2, EstimationMode::full);
    SolverConfig config;
    config.iterations = 3;
    const auto res = run_inference(oracle, w, est, config);
    REQUIRE(res.completed_iterations == 3);
    const Vector r0 = oracle.gradient(w, Batch{});
    Matrix krylov(6, 3);
    krylov.col(0) = r0;
    krylov.col(1) = B * r0;
    krylov.col(2) = B * (B * r0);
    CHECK(max_principal_angle(res.observations.S, krylov) <= 1e-6);
  }
}

TEST_CASE("noise-free inference with N probes recovers the matrix") {
  Rng rng(206);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix B = random_spd(6, rng, 10.0);
    ExactQuadraticOracle oracle(B, random_vector(6, rng));
    const Vector w = random_vector(6, rng);
    const auto est = estimate_parameters(oracle, w, 2, EstimationMode::full);
    SolverConfig config;
    config.iterations = 6;
    const auto res = run_inference(oracle, w, est, config);
    REQUIRE(res.completed_iterations == 6);
    for (int k = 0; k < 5; ++k) {
      const Vector v = random_vector(6, rng);
      CHECK(relative_error(res.posterior.apply(v), B * v) <= 1e-6);
    }
  }
}

TEST_CASE("new noise-free probes are not redundant until the Krylov space is exhausted") {
  Rng rng(207);
  const Matrix B = random_spd(8, rng, 30.0);
  ExactQuadraticOracle oracle(B, random_vector(8, rng));
  const Vector w = random_vector(8, rng);
  const auto est = estimate_parameters(oracle, w, 2, EstimationMode::full);
  SolverConfig config;
  config.iterations = 8;
  const auto res = run_inference(oracle, w, est, config);
  const Matrix& S = res.observations.S;
  for (Index i = 1; i < S.cols(); ++i) {
    const Matrix prev = S.leftCols(i);
    const Vector s = S.col(i);
    const Vector proj = prev * prev.colPivHouseholderQr().solve(s);
    CHECK((s - proj).norm() / s.norm() >= 1e-8);
  }
}

TEST_CASE("inference failure keeps the previous posterior") {
  Rng rng(208);
  const Matrix B = random_spd(4, rng, 5.0);
  ExactQuadraticOracle oracle(B, random_vector(4, rng));
  const Vector w = random_vector(4, rng);
  const auto est = estimate_parameters(oracle, w, 2, EstimationMode::full);
  SolverConfig config;
  config.iterations = 7;
  const long before = log::warning_count();
  const auto res = run_inference(oracle, w, est, config);
  CHECK(res.completed_iterations == 4);
  CHECK(res.posterior.rank() == 4);
  CHECK(log::warning_count() > before);
  CHECK(relative_error(res.posterior.dense(), B) <= 1e-6);
}

TEST_CASE("the active loop is deterministic for a fixed seed") {
  Rng rng(209);
  const Matrix B = random_spd(20, rng, 100.0);
  const Vector b = random_vector(20, rng);
  auto run = [&] {
    LoggedNoisyQuadratic oracle(B, b, 0.2, 99);
    const Vector w = Vector::Zero(20);
    const auto est = estimate_parameters(oracle, w, 5, EstimationMode::full);
    SolverConfig config;
    config.iterations = 16;
    return run_inference(oracle, w, est, config);
  };
  const auto a = run();
  const auto c = run();
  REQUIRE(a.posterior.rank() == 16);
  CHECK(std::memcmp(a.posterior.A().data(), c.posterior.A().data(), sizeof(double) * 20 * 16) == 0);
  CHECK(std::memcmp(a.posterior.C().data(), c.posterior.C().data(), sizeof(double) * 20 * 16) == 0);
}

TEST_CASE("the active loop charges one batch per iteration") {
  Rng rng(210);
  ExactQuadraticOracle oracle(random_spd(30, rng, 10.0), random_vector(30, rng), 256);
  const Vector w = Vector::Zero(30);
  const auto est = estimate_parameters(oracle, w, 5, EstimationMode::full);
  SolverConfig config;
  config.iterations = 16;
  const auto res = run_inference(oracle, w, est, config);
  CHECK(res.completed_iterations == 16);
  CHECK(oracle.data_read() == 4096 + 5 * 256);
  REQUIRE(res.log.size() == 16);
  CHECK(res.log.back().data_read == oracle.data_read());
  const std::string csv = iteration_log_csv(res.log);
  CHECK(csv.rfind("iteration,probe_norm,data_read,wall_ms\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 17);
}

TEST_CASE("solver config validation") {
  SolverConfig config;
  config.iterations = 0;
  CHECK_THROWS_AS(config.validate(), InvalidArgument);
  config.iterations = 3;
  config.init_samples = 1;
  CHECK_THROWS_AS(config.validate(), InvalidArgument);
  CHECK(parse_estimation_mode("scalar") == EstimationMode::scalar);
  CHECK_THROWS(parse_estimation_mode("diag"));
}
