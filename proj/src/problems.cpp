#include "probprec/problems.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <random>
#include <sstream>

#include "probprec/errors.hpp"

namespace probprec {
namespace {

void require_finite(const Matrix& M, const char* what) {
  if (!M.allFinite()) throw InvalidArgument(std::string(what) + " contains non-finite values");
}

void require_length(const Vector& v, Index n, const char* what) {
  if (v.size() != n) {
    std::ostringstream os;
    os << what << " has length " << v.size() << ", expected " << n;
    throw InvalidArgument(os.str());
  }
}

void require_batch(const Batch& batch, std::size_t population) {
  if (batch.indices.empty()) throw InvalidArgument("empty batch");
  for (Index i : batch.indices) {
    if (i < 0 || static_cast<std::size_t>(i) >= population) {
      throw InvalidArgument("batch index out of range");
    }
  }
}

class QuadraticBatchOracle final : public SampledOracle {
 public:
  QuadraticBatchOracle(const QuadraticProblem& p, std::size_t batch_size, std::uint64_t seed)
      : SampledOracle(p.dimension(), p.num_train(), batch_size, seed), p_(p) {}
  Vector gradient(const Vector& w, const Batch& b) const override { return p_.batch_gradient(w, b); }
  Vector hvp(const Vector&, const Vector& s, const Batch& b) const override {
    return p_.batch_hvp(s, b);
  }

 private:
  const QuadraticProblem& p_;
};

class LogisticBatchOracle final : public SampledOracle {
 public:
  LogisticBatchOracle(const LogisticProblem& p, std::size_t batch_size, std::uint64_t seed)
      : SampledOracle(p.dimension(), p.num_train(), batch_size, seed), p_(p) {}
  Vector gradient(const Vector& w, const Batch& b) const override { return p_.batch_gradient(w, b); }
  Vector hvp(const Vector& w, const Vector& s, const Batch& b) const override {
    return p_.batch_hvp(w, s, b);
  }

 private:
  const LogisticProblem& p_;
};

Vector log_uniform_values(Index count, double hi, double lo) {
  Vector v(count);
  for (Index i = 0; i < count; ++i) {
    const double t = count > 1 ? static_cast<double>(i) / static_cast<double>(count - 1) : 0.0;
    v(i) = hi * std::pow(lo / hi, t);
  }
  return v;
}

}  // namespace

double log1p_exp_neg(double z) {
  return z >= 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------

Index FeatureMapSpec::output_dim_for(Index d) { return d + d * (d + 1) / 2 + 1; }

FeatureMapSpec FeatureMapSpec::identity(Index input_dim) {
  return {input_dim, Vector::Ones(output_dim_for(input_dim))};
}

FeatureMapSpec FeatureMapSpec::log_uniform(Index input_dim, double lo, double hi) {
  if (!(lo > 0) || !(hi >= lo)) throw InvalidArgument("log_uniform scales need 0 < lo <= hi");
  return {input_dim, log_uniform_values(output_dim_for(input_dim), hi, lo)};
}

void FeatureMapSpec::validate() const {
  if (input_dim <= 0) throw InvalidArgument("feature map input_dim must be positive");
  if (scales.size() != output_dim()) {
    std::ostringstream os;
    os << "feature map has " << scales.size() << " scales, expected " << output_dim();
    throw InvalidArgument(os.str());
  }
  for (Index i = 0; i < scales.size(); ++i) {
    if (!(scales(i) > 0) || !std::isfinite(scales(i))) {
      throw InvalidArgument("feature map scales must be positive and finite");
    }
  }
}

Vector polynomial_features(const Vector& x, const FeatureMapSpec& spec) {
  spec.validate();
  require_length(x, spec.input_dim, "polynomial_features input");
  const Index d = spec.input_dim;
  Vector phi(spec.output_dim());
  Index k = 0;
  for (Index i = 0; i < d; ++i) phi(k++) = x(i);
  double cross = 0.0;
  for (Index i = 0; i < d; ++i) {
    for (Index j = i; j < d; ++j) {
      phi(k++) = x(i) * x(j);
      if (j > i) cross += x(i) * x(j);
    }
  }
  phi(k++) = cross / static_cast<double>(d);
  return phi.cwiseProduct(spec.scales);
}

Matrix polynomial_feature_matrix(const Matrix& X, const FeatureMapSpec& spec) {
  Matrix out(spec.output_dim(), X.cols());
  for (Index c = 0; c < X.cols(); ++c) out.col(c) = polynomial_features(Vector(X.col(c)), spec);
  return out;
}

// ---------------------------------------------------------------------------

QuadraticProblem::QuadraticProblem(Matrix phi, Vector y, double alpha_reg, Matrix phi_test,
                                   Vector y_test)
    : phi_(std::move(phi)), y_(std::move(y)), alpha_(alpha_reg) {
  if (phi_.rows() == 0 || phi_.cols() == 0) throw InvalidArgument("regression data is empty");
  require_length(y_, phi_.cols(), "regression targets");
  if (!(alpha_reg > 0) || !std::isfinite(alpha_reg)) {
    throw InvalidArgument("alpha_reg must be positive so that the Hessian is SPD");
  }
  require_finite(phi_, "feature matrix");
  require_finite(y_, "regression targets");

  const double inv_n = 1.0 / static_cast<double>(phi_.cols());
  B_ = Matrix(phi_.rows(), phi_.rows());
  B_.setZero();
  B_.selfadjointView<Eigen::Lower>().rankUpdate(phi_, inv_n);
  B_ = B_.selfadjointView<Eigen::Lower>();
  B_.diagonal().array() += alpha_;
  r_ = phi_ * y_ * inv_n;
  yy_ = y_.squaredNorm() * inv_n;

  if (phi_test.size() > 0) {
    if (phi_test.rows() != phi_.rows()) throw InvalidArgument("test features have the wrong dimension");
    require_length(y_test, phi_test.cols(), "test targets");
    require_finite(phi_test, "test feature matrix");
    const double inv_t = 1.0 / static_cast<double>(phi_test.cols());
    Bt_ = Matrix::Zero(phi_.rows(), phi_.rows());
    Bt_.selfadjointView<Eigen::Lower>().rankUpdate(phi_test, inv_t);
    Bt_ = Bt_.selfadjointView<Eigen::Lower>();
    rt_ = phi_test * y_test * inv_t;
    yyt_ = y_test.squaredNorm() * inv_t;
    has_test_ = true;
  }
}

double QuadraticProblem::train_loss(const Vector& w) const {
  require_length(w, dimension(), "w");
  return 0.5 * w.dot(B_ * w) - w.dot(r_) + 0.5 * yy_;
}

double QuadraticProblem::test_loss(const Vector& w) const {
  require_length(w, dimension(), "w");
  if (!has_test_) return train_loss(w) - 0.5 * alpha_ * w.squaredNorm();
  return 0.5 * w.dot(Bt_ * w) - w.dot(rt_) + 0.5 * yyt_;
}

Vector QuadraticProblem::full_gradient(const Vector& w) const {
  require_length(w, dimension(), "w");
  return B_ * w - r_;
}

Vector QuadraticProblem::batch_gradient(const Vector& w, const Batch& batch) const {
  require_length(w, dimension(), "w");
  require_batch(batch, num_train());
  Vector g = Vector::Zero(dimension());
  for (Index i : batch.indices) g.noalias() += phi_.col(i) * (phi_.col(i).dot(w) - y_(i));
  g /= static_cast<double>(batch.size());
  g.noalias() += alpha_ * w;
  return g;
}

Vector QuadraticProblem::batch_hvp(const Vector& s, const Batch& batch) const {
  require_length(s, dimension(), "s");
  require_batch(batch, num_train());
  Vector h = Vector::Zero(dimension());
  for (Index i : batch.indices) h.noalias() += phi_.col(i) * phi_.col(i).dot(s);
  h /= static_cast<double>(batch.size());
  h.noalias() += alpha_ * s;
  return h;
}

std::unique_ptr<HessianOracle> QuadraticProblem::make_oracle(std::size_t batch_size,
                                                             std::uint64_t seed) const {
  return batch_oracle(*this, batch_size, seed);
}

Vector exact_solution(const QuadraticProblem& problem) {
  Eigen::LLT<Matrix> llt(problem.hessian());
  if (llt.info() != Eigen::Success) throw NumericalError("exact_solution: Hessian is not SPD");
  return llt.solve(problem.rhs());
}

std::unique_ptr<HessianOracle> batch_oracle(const QuadraticProblem& problem,
                                            std::size_t batch_size, std::uint64_t seed) {
  return std::make_unique<QuadraticBatchOracle>(problem, batch_size, seed);
}

void RegressionDataSpec::validate() const {
  if (n_train == 0) throw InvalidArgument("n_train must be positive");
  if (input_dim <= 0) throw InvalidArgument("input_dim must be positive");
  if (!(input_scale_lo > 0) || !(input_scale_hi >= input_scale_lo)) {
    throw InvalidArgument("input scales need 0 < lo <= hi");
  }
  if (!(noise >= 0)) throw InvalidArgument("noise must be non-negative");
}

SplitDataset generate_regression_data(const RegressionDataSpec& spec) {
  spec.validate();
  const Index d = spec.input_dim;
  const Vector sigma = log_uniform_values(d, spec.input_scale_hi, spec.input_scale_lo);

  // Teacher: quadratic in the standardized inputs plus an unmodelled smooth term.
  std::mt19937_64 teacher_rng(mix_seed(spec.seed, 0));
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index pairs = d * (d + 1) / 2;
  Vector a(d), b(pairs);
  for (Index i = 0; i < d; ++i) a(i) = normal(teacher_rng) / std::sqrt(static_cast<double>(d));
  for (Index i = 0; i < pairs; ++i) b(i) = normal(teacher_rng) / std::sqrt(static_cast<double>(pairs));

  auto make_split = [&](std::size_t n, std::uint64_t stream) {
    std::mt19937_64 rng(mix_seed(spec.seed, stream));
    Dataset out{Matrix(d, static_cast<Index>(n)), Matrix(1, static_cast<Index>(n))};
    Vector u(d);
    for (Index c = 0; c < static_cast<Index>(n); ++c) {
      for (Index i = 0; i < d; ++i) u(i) = normal(rng);
      double y = a.dot(u);
      Index k = 0;
      for (Index i = 0; i < d; ++i) {
        for (Index j = i; j < d; ++j) y += b(k++) * u(i) * u(j);
        y += 0.3 * std::sin(2.0 * u(i)) / std::sqrt(static_cast<double>(d));
      }
      y += spec.noise * normal(rng);
      out.features.col(c) = sigma.cwiseProduct(u);
      out.targets(0, c) = y;
    }
    return out;
  };
  return {make_split(spec.n_train, 1), make_split(spec.n_test, 2)};
}

std::unique_ptr<QuadraticProblem> make_regression_problem(const SplitDataset& data,
                                                          const FeatureMapSpec& features,
                                                          double alpha_reg) {
  if (data.train.targets.rows() != 1) throw ConfigError("regression data needs exactly one target column");
  if (data.train.input_dim() != features.input_dim) {
    std::ostringstream os;
    os << "regression data has input dimension " << data.train.input_dim()
       << " but the feature map expects " << features.input_dim;
    throw ConfigError(os.str());
  }
  Matrix phi = polynomial_feature_matrix(data.train.features, features);
  Vector y = data.train.targets.row(0).transpose();
  Matrix phi_t;
  Vector y_t;
  if (data.test.size() > 0) {
    if (data.test.input_dim() != features.input_dim || data.test.targets.rows() != 1) {
      throw ConfigError("regression test split does not match the training split");
    }
    phi_t = polynomial_feature_matrix(data.test.features, features);
    y_t = data.test.targets.row(0).transpose();
  }
  return std::make_unique<QuadraticProblem>(std::move(phi), std::move(y), alpha_reg, std::move(phi_t),
                                            std::move(y_t));
}

// ---------------------------------------------------------------------------

LogisticProblem::LogisticProblem(Matrix X, Vector labels, double lambda_reg, Matrix X_test,
                                 Vector labels_test, double data_weight)
    : X_(std::move(X)), y_(std::move(labels)), lambda_(lambda_reg), weight_(data_weight),
      Xt_(std::move(X_test)), yt_(std::move(labels_test)) {
  if (X_.rows() == 0 || X_.cols() == 0) throw InvalidArgument("logistic data is empty");
  require_length(y_, X_.cols(), "labels");
  require_finite(X_, "logistic inputs");
  auto check_labels = [](const Vector& y) {
    for (Index i = 0; i < y.size(); ++i) {
      if (y(i) != 1.0 && y(i) != -1.0) throw InvalidArgument("labels must be -1 or +1");
    }
  };
  check_labels(y_);
  if (!(lambda_reg > 0) || !std::isfinite(lambda_reg)) {
    throw InvalidArgument("lambda_reg must be positive");
  }
  if (!(data_weight >= 0) || !std::isfinite(data_weight)) {
    throw InvalidArgument("data_weight must be non-negative");
  }
  if (Xt_.size() > 0) {
    if (Xt_.rows() != X_.rows()) throw InvalidArgument("test inputs have the wrong dimension");
    require_length(yt_, Xt_.cols(), "test labels");
    require_finite(Xt_, "test inputs");
    check_labels(yt_);
  }
}

double LogisticProblem::train_loss(const Vector& w) const {
  require_length(w, dimension(), "w");
  const Vector z = X_.transpose() * w;
  double sum = 0.0;
  for (Index i = 0; i < z.size(); ++i) sum += log1p_exp_neg(y_(i) * z(i));
  return weight_ * sum / static_cast<double>(z.size()) + 0.5 * lambda_ * w.squaredNorm();
}

double LogisticProblem::test_loss(const Vector& w) const {
  require_length(w, dimension(), "w");
  if (Xt_.size() == 0) return train_loss(w) - 0.5 * lambda_ * w.squaredNorm();
  const Vector z = Xt_.transpose() * w;
  double sum = 0.0;
  for (Index i = 0; i < z.size(); ++i) sum += log1p_exp_neg(yt_(i) * z(i));
  return sum / static_cast<double>(z.size());
}

std::optional<double> LogisticProblem::test_accuracy(const Vector& w) const {
  require_length(w, dimension(), "w");
  const Matrix& X = Xt_.size() > 0 ? Xt_ : X_;
  const Vector& y = Xt_.size() > 0 ? yt_ : y_;
  const Vector z = X.transpose() * w;
  Index correct = 0;
  for (Index i = 0; i < z.size(); ++i) correct += (z(i) > 0 ? 1.0 : -1.0) == y(i);
  return static_cast<double>(correct) / static_cast<double>(z.size());
}

Vector LogisticProblem::full_gradient(const Vector& w) const {
  require_length(w, dimension(), "w");
  const Vector z = X_.transpose() * w;
  Vector coef(z.size());
  for (Index i = 0; i < z.size(); ++i) coef(i) = -y_(i) * sigmoid(-y_(i) * z(i));
  return X_ * coef * (weight_ / static_cast<double>(z.size())) + lambda_ * w;
}

Matrix LogisticProblem::full_hessian(const Vector& w) const {
  require_length(w, dimension(), "w");
  const Vector z = X_.transpose() * w;
  Vector root(z.size());
  for (Index i = 0; i < z.size(); ++i) {
    const double p = sigmoid(z(i));
    root(i) = std::sqrt(p * (1.0 - p));
  }
  const Matrix Xs = X_ * root.asDiagonal();
  Matrix H = Matrix::Zero(dimension(), dimension());
  H.selfadjointView<Eigen::Lower>().rankUpdate(Xs, weight_ / static_cast<double>(z.size()));
  H = H.selfadjointView<Eigen::Lower>();
  H.diagonal().array() += lambda_;
  return H;
}

Vector LogisticProblem::batch_gradient(const Vector& w, const Batch& batch) const {
  require_length(w, dimension(), "w");
  require_batch(batch, num_train());
  Vector g = Vector::Zero(dimension());
  for (Index i : batch.indices) {
    const double z = X_.col(i).dot(w);
    g.noalias() += X_.col(i) * (-y_(i) * sigmoid(-y_(i) * z));
  }
  g *= weight_ / static_cast<double>(batch.size());
  g.noalias() += lambda_ * w;
  return g;
}

Vector LogisticProblem::batch_hvp(const Vector& w, const Vector& s, const Batch& batch) const {
  require_length(w, dimension(), "w");
  require_length(s, dimension(), "s");
  require_batch(batch, num_train());
  Vector h = Vector::Zero(dimension());
  for (Index i : batch.indices) {
    const double p = sigmoid(X_.col(i).dot(w));
    h.noalias() += X_.col(i) * (p * (1.0 - p) * X_.col(i).dot(s));
  }
  h *= weight_ / static_cast<double>(batch.size());
  h.noalias() += lambda_ * s;
  return h;
}

std::unique_ptr<HessianOracle> LogisticProblem::make_oracle(std::size_t batch_size,
                                                            std::uint64_t seed) const {
  return logistic_oracle(*this, batch_size, seed);
}

std::unique_ptr<HessianOracle> logistic_oracle(const LogisticProblem& problem,
                                               std::size_t batch_size, std::uint64_t seed) {
  return std::make_unique<LogisticBatchOracle>(problem, batch_size, seed);
}

void LogisticDataSpec::validate() const {
  if (n_train == 0) throw InvalidArgument("n_train must be positive");
  if (input_dim <= 0) throw InvalidArgument("input_dim must be positive");
  if (!(separation >= 0)) throw InvalidArgument("separation must be non-negative");
}

SplitDataset generate_logistic_data(const LogisticDataSpec& spec) {
  spec.validate();
  const Index d = spec.input_dim;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::mt19937_64 mean_rng(mix_seed(spec.seed, 0));
  Vector mu(d);
  for (Index i = 0; i < d; ++i) mu(i) = normal(mean_rng);
  mu *= 0.5 * spec.separation / mu.norm();

  auto make_split = [&](std::size_t n, std::uint64_t stream) {
    std::mt19937_64 rng(mix_seed(spec.seed, stream));
    Dataset out{Matrix(d, static_cast<Index>(n)), Matrix(1, static_cast<Index>(n))};
    for (Index c = 0; c < static_cast<Index>(n); ++c) {
      const double label = (c % 2 == 0) ? 1.0 : -1.0;
      for (Index i = 0; i < d; ++i) out.features(i, c) = label * mu(i) + normal(rng);
      out.targets(0, c) = label;
    }
    // Scale so that the typical ||x|| is about one; keeps the logistic Hessian O(1).
    out.features /= std::sqrt(static_cast<double>(d));
    return out;
  };
  return {make_split(spec.n_train, 1), make_split(spec.n_test, 2)};
}

std::unique_ptr<LogisticProblem> make_logistic_problem(const SplitDataset& data, double lambda_reg) {
  auto labels = [](const Dataset& ds) {
    if (ds.targets.rows() != 1) throw ConfigError("logistic data needs exactly one label column");
    Vector y = ds.targets.row(0).transpose();
    for (Index i = 0; i < y.size(); ++i) {
      if (y(i) == 0.0) {
        y(i) = -1.0;
      } else if (y(i) != 1.0 && y(i) != -1.0) {
        std::ostringstream os;
        os << "logistic label " << y(i) << " at sample " << i << " is not in {-1, 0, +1}";
        throw ConfigError(os.str());
      }
    }
    return y;
  };
  Vector y = labels(data.train);
  Matrix Xt;
  Vector yt;
  if (data.test.size() > 0) {
    if (data.test.input_dim() != data.train.input_dim()) {
      throw ConfigError("logistic test split does not match the training split");
    }
    Xt = data.test.features;
    yt = labels(data.test);
  }
  return std::make_unique<LogisticProblem>(data.train.features, std::move(y), lambda_reg, std::move(Xt),
                                           std::move(yt));
}

}  // namespace probprec
