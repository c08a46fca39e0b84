#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "probprec/dataset.hpp"
#include "probprec/linalg.hpp"
#include "probprec/oracle.hpp"

namespace probprec {

/// An empirical-risk problem the harness can optimize. Oracles returned by
/// make_oracle keep a reference to the problem, which must outlive them.
class Problem {
 public:
  virtual ~Problem() = default;

  virtual std::string kind() const = 0;
  virtual Index dimension() const = 0;
  virtual std::size_t num_train() const = 0;

  virtual double train_loss(const Vector& w) const = 0;
  virtual double test_loss(const Vector& w) const = 0;
  /// Fraction of correctly classified test points; empty for regression.
  virtual std::optional<double> test_accuracy(const Vector&) const { return std::nullopt; }
  virtual Vector full_gradient(const Vector& w) const = 0;
  virtual Vector initial_point() const { return Vector::Zero(dimension()); }

  virtual std::unique_ptr<HessianOracle> make_oracle(std::size_t batch_size,
                                                     std::uint64_t seed) const = 0;
};

/// Base for oracles that sample mini-batches from a finite training set.
class SampledOracle : public HessianOracle {
 public:
  SampledOracle(Index dimension, std::size_t population, std::size_t batch_size, std::uint64_t seed)
      : dimension_(dimension), sampler_(population, batch_size, seed) {}

  Index dimension() const override { return dimension_; }
  std::size_t batch_size() const override { return sampler_.batch_size(); }
  Batch draw_batch() override {
    charge(sampler_.batch_size());
    return sampler_.draw();
  }

 private:
  Index dimension_;
  BatchSampler sampler_;
};

// ---------------------------------------------------------------------------
// Polynomial regression

/// phi(x) = A [x, vec(x x^T)] with A = diag(scales) * M, where M keeps the d
/// linear terms, the d(d+1)/2 products x_i x_j (i <= j) and one aggregate
/// cross term sum_{i<j} x_i x_j / d. For d = 21 this is 21 + 231 + 1 = 253.
struct FeatureMapSpec {
  Index input_dim = 21;
  Vector scales;

  static Index output_dim_for(Index input_dim);
  Index output_dim() const { return output_dim_for(input_dim); }
  /// Unit scales (A = M).
  static FeatureMapSpec identity(Index input_dim);
  /// Scales log-uniformly spaced from `hi` (first feature) down to `lo` (last).
  static FeatureMapSpec log_uniform(Index input_dim, double lo = 1e-3, double hi = 1.0);
  void validate() const;
};

Vector polynomial_features(const Vector& x, const FeatureMapSpec& spec);
/// Column-wise map of a d x n input matrix to an output_dim x n feature matrix.
Matrix polynomial_feature_matrix(const Matrix& X, const FeatureMapSpec& spec);

/// L(w) = alpha_reg/2 ||w||^2 + 1/(2|D|) ||Phi^T w - y||^2, so the Hessian is
/// exactly B = Phi Phi^T / |D| + alpha_reg I.
class QuadraticProblem final : public Problem {
 public:
  QuadraticProblem(Matrix phi, Vector y, double alpha_reg, Matrix phi_test = Matrix(),
                   Vector y_test = Vector());

  std::string kind() const override { return "regression"; }
  Index dimension() const override { return phi_.rows(); }
  std::size_t num_train() const override { return static_cast<std::size_t>(phi_.cols()); }

  double train_loss(const Vector& w) const override;
  /// 1/(2|T|) ||Phi_T^T w - y_T||^2 on the test split; train data term if absent.
  double test_loss(const Vector& w) const override;
  Vector full_gradient(const Vector& w) const override;
  std::unique_ptr<HessianOracle> make_oracle(std::size_t batch_size,
                                             std::uint64_t seed) const override;

  const Matrix& features() const { return phi_; }
  const Vector& targets() const { return y_; }
  double alpha_reg() const { return alpha_; }
  const Matrix& hessian() const { return B_; }
  /// Phi y / |D|.
  const Vector& rhs() const { return r_; }

  /// Per-batch gradient and Hessian-vector product (Eq. 18 structure).
  Vector batch_gradient(const Vector& w, const Batch& batch) const;
  Vector batch_hvp(const Vector& s, const Batch& batch) const;

 private:
  Matrix phi_;
  Vector y_;
  double alpha_;
  Matrix B_;
  Vector r_;
  double yy_ = 0.0;  // y^T y / |D|
  bool has_test_ = false;
  Matrix Bt_;  // test data term: Phi_T Phi_T^T / |T|
  Vector rt_;
  double yyt_ = 0.0;
};

/// Dense solve of B w = Phi y / |D| by Cholesky.
Vector exact_solution(const QuadraticProblem& problem);
/// Mini-batch oracle; see QuadraticProblem::batch_hvp.
std::unique_ptr<HessianOracle> batch_oracle(const QuadraticProblem& problem,
                                            std::size_t batch_size, std::uint64_t seed);

/// Synthetic stand-in for a robot-dynamics regression set: inputs with
/// heterogeneous per-dimension scales, a smooth nonlinear target and noise.
struct RegressionDataSpec {
  std::size_t n_train = 44484;
  std::size_t n_test = 4449;
  Index input_dim = 21;
  double input_scale_lo = 0.1;  // per-dimension input std, log-uniform
  double input_scale_hi = 3.0;
  double noise = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SplitDataset {
  Dataset train;
  Dataset test;
};

SplitDataset generate_regression_data(const RegressionDataSpec& spec);
std::unique_ptr<QuadraticProblem> make_regression_problem(const SplitDataset& data,
                                                          const FeatureMapSpec& features,
                                                          double alpha_reg);

// ---------------------------------------------------------------------------
// Logistic regression

/// L(w) = data_weight/|D| sum log(1 + exp(-y_i x_i^T w)) + lambda_reg/2 ||w||^2
/// with labels y_i in {-1, +1}.
class LogisticProblem final : public Problem {
 public:
  LogisticProblem(Matrix X, Vector labels, double lambda_reg, Matrix X_test = Matrix(),
                  Vector labels_test = Vector(), double data_weight = 1.0);

  std::string kind() const override { return "logistic"; }
  Index dimension() const override { return X_.rows(); }
  std::size_t num_train() const override { return static_cast<std::size_t>(X_.cols()); }

  double train_loss(const Vector& w) const override;
  double test_loss(const Vector& w) const override;
  std::optional<double> test_accuracy(const Vector& w) const override;
  Vector full_gradient(const Vector& w) const override;
  std::unique_ptr<HessianOracle> make_oracle(std::size_t batch_size,
                                             std::uint64_t seed) const override;

  /// Dense full-data Hessian, used by the Newton baseline.
  Matrix full_hessian(const Vector& w) const;
  Vector batch_gradient(const Vector& w, const Batch& batch) const;
  Vector batch_hvp(const Vector& w, const Vector& s, const Batch& batch) const;

  const Matrix& inputs() const { return X_; }
  const Vector& labels() const { return y_; }
  double lambda_reg() const { return lambda_; }
  double data_weight() const { return weight_; }

 private:
  Matrix X_;
  Vector y_;
  double lambda_;
  double weight_;
  Matrix Xt_;
  Vector yt_;
};

std::unique_ptr<HessianOracle> logistic_oracle(const LogisticProblem& problem,
                                               std::size_t batch_size, std::uint64_t seed);

/// Two isotropic Gaussians at +-mu with labels +-1.
struct LogisticDataSpec {
  std::size_t n_train = 10000;
  std::size_t n_test = 2000;
  Index input_dim = 784;
  double separation = 3.0;  // ||mu_+ - mu_-||
  std::uint64_t seed = 0;

  void validate() const;
};

SplitDataset generate_logistic_data(const LogisticDataSpec& spec);
/// Accepts labels in {-1, +1} or {0, 1} (0 maps to -1).
std::unique_ptr<LogisticProblem> make_logistic_problem(const SplitDataset& data, double lambda_reg);

/// Numerically stable log(1 + exp(-z)).
double log1p_exp_neg(double z);
/// 1 / (1 + exp(-z)).
double sigmoid(double z);

}  // namespace probprec
