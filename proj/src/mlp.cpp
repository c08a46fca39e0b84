#include "probprec/mlp.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "probprec/errors.hpp"

namespace probprec {
namespace {

using ConstMap = Eigen::Map<const Matrix>;
using ConstVecMap = Eigen::Map<const Vector>;
using MatMap = Eigen::Map<Matrix>;
using VecMap = Eigen::Map<Vector>;

struct ForwardPass {
  std::vector<Matrix> a;  // a[0] = X, a[l+1] = f(z[l]); a[L] = z[L-1] (no output activation)
  std::vector<Matrix> z;
};

Matrix activate(const ToyNet& net, const Matrix& z) {
  return net.activation == Activation::tanh ? Matrix(z.array().tanh()) : z;
}

// f'(z) expressed through a = f(z).
Matrix derivative(const ToyNet& net, const Matrix& a) {
  if (net.activation == Activation::identity) return Matrix::Ones(a.rows(), a.cols());
  return (1.0 - a.array().square()).matrix();
}

// f''(z) expressed through a = f(z).
Matrix second_derivative(const ToyNet& net, const Matrix& a) {
  if (net.activation == Activation::identity) return Matrix::Zero(a.rows(), a.cols());
  return (-2.0 * a.array() * (1.0 - a.array().square())).matrix();
}

void check_inputs(const ToyNet& net, const Vector& w, const Matrix& X, const Matrix& T) {
  net.validate();
  if (w.size() != net.num_parameters()) {
    std::ostringstream os;
    os << "parameter vector has length " << w.size() << ", network has " << net.num_parameters();
    throw InvalidArgument(os.str());
  }
  if (X.rows() != net.layers.front()) throw InvalidArgument("input dimension does not match the network");
  if (X.cols() == 0) throw InvalidArgument("empty batch");
  if (T.cols() != X.cols()) throw InvalidArgument("targets and inputs disagree in batch size");
  const Index outputs = net.layers.back();
  if (net.loss == OutputLoss::cross_entropy) {
    if (T.rows() != 1) throw InvalidArgument("cross-entropy targets must be a single row of class indices");
    for (Index i = 0; i < T.cols(); ++i) {
      const double c = T(0, i);
      if (c != std::floor(c) || c < 0 || c >= static_cast<double>(outputs)) {
        throw InvalidArgument("class index out of range");
      }
    }
  } else if (T.rows() != outputs) {
    throw InvalidArgument("squared-loss targets must have one row per output");
  }
}

ConstMap weights(const ToyNet& net, const Vector& w, Index l) {
  return ConstMap(w.data() + net.block_offset(l), net.layers[l + 1], net.layers[l]);
}

ConstVecMap bias(const ToyNet& net, const Vector& w, Index l) {
  return ConstVecMap(w.data() + net.block_offset(l) + net.layers[l + 1] * net.layers[l],
                     net.layers[l + 1]);
}

ForwardPass forward(const ToyNet& net, const Vector& w, const Matrix& X) {
  const Index L = net.num_layers();
  ForwardPass f;
  f.a.reserve(L + 1);
  f.z.reserve(L);
  f.a.push_back(X);
  for (Index l = 0; l < L; ++l) {
    Matrix z = weights(net, w, l) * f.a.back();
    z.colwise() += bias(net, w, l);
    f.a.push_back(l + 1 < L ? activate(net, z) : z);
    f.z.push_back(std::move(z));
  }
  return f;
}

Matrix softmax(const Matrix& Z) {
  Matrix P(Z.rows(), Z.cols());
  for (Index c = 0; c < Z.cols(); ++c) {
    const double m = Z.col(c).maxCoeff();
    P.col(c) = (Z.col(c).array() - m).exp().matrix();
    P.col(c) /= P.col(c).sum();
  }
  return P;
}

// d(mean loss)/d(output), one column per sample.
Matrix output_delta(const ToyNet& net, const Matrix& Z, const Matrix& T, Matrix* probs) {
  const double inv_b = 1.0 / static_cast<double>(Z.cols());
  if (net.loss == OutputLoss::squared) return (Z - T) * inv_b;
  Matrix P = softmax(Z);
  Matrix delta = P;
  for (Index c = 0; c < Z.cols(); ++c) delta(static_cast<Index>(T(0, c)), c) -= 1.0;
  if (probs) *probs = std::move(P);
  return delta * inv_b;
}

// Gradient and, when s is non-null, the Hessian-vector product with s.
void sweep(const ToyNet& net, const Vector& w, const Matrix& X, const Matrix& T, const Vector* s,
           Vector* grad, Vector* hv) {
  const Index L = net.num_layers();
  const ForwardPass f = forward(net, w, X);
  Matrix P;
  std::vector<Matrix> delta(L);
  delta[L - 1] = output_delta(net, f.a[L], T, &P);
  for (Index l = L - 1; l > 0; --l) {
    delta[l - 1] = derivative(net, f.a[l]).cwiseProduct(weights(net, w, l).transpose() * delta[l]);
  }

  if (grad) {
    grad->resize(net.num_parameters());
    for (Index l = 0; l < L; ++l) {
      const Index out = net.layers[l + 1], in = net.layers[l];
      MatMap(grad->data() + net.block_offset(l), out, in).noalias() = delta[l] * f.a[l].transpose();
      VecMap(grad->data() + net.block_offset(l) + out * in, out) = delta[l].rowwise().sum();
    }
    *grad += net.l2 * w;
  }
  if (!s || !hv) return;

  // R-operator forward sweep.
  std::vector<Matrix> Ra(L + 1), Rz(L);
  Ra[0] = Matrix::Zero(X.rows(), X.cols());
  for (Index l = 0; l < L; ++l) {
    const ConstMap V = weights(net, *s, l);
    Rz[l] = weights(net, w, l) * Ra[l] + V * f.a[l];
    Rz[l].colwise() += bias(net, *s, l);
    Ra[l + 1] = l + 1 < L ? Matrix(derivative(net, f.a[l + 1]).cwiseProduct(Rz[l])) : Rz[l];
  }

  // R-operator backward sweep.
  std::vector<Matrix> Rdelta(L);
  const double inv_b = 1.0 / static_cast<double>(X.cols());
  if (net.loss == OutputLoss::squared) {
    Rdelta[L - 1] = Rz[L - 1] * inv_b;
  } else {
    Matrix PR = P.cwiseProduct(Rz[L - 1]);
    const Eigen::RowVectorXd col_sums = PR.colwise().sum();
    PR -= P * col_sums.asDiagonal();
    Rdelta[L - 1] = PR * inv_b;
  }
  for (Index l = L - 1; l > 0; --l) {
    const ConstMap W = weights(net, w, l);
    const ConstMap V = weights(net, *s, l);
    const Matrix back = W.transpose() * delta[l];
    Rdelta[l - 1] = second_derivative(net, f.a[l]).cwiseProduct(Rz[l - 1]).cwiseProduct(back) +
                    derivative(net, f.a[l]).cwiseProduct(V.transpose() * delta[l] + W.transpose() * Rdelta[l]);
  }

  hv->resize(net.num_parameters());
  for (Index l = 0; l < L; ++l) {
    const Index out = net.layers[l + 1], in = net.layers[l];
    MatMap(hv->data() + net.block_offset(l), out, in).noalias() =
        Rdelta[l] * f.a[l].transpose() + delta[l] * Ra[l].transpose();
    VecMap(hv->data() + net.block_offset(l) + out * in, out) = Rdelta[l].rowwise().sum();
  }
  *hv += net.l2 * *s;
}

Vector restrict_to_block(const ToyNet& net, const Vector& v, Index layer) {
  Vector out = Vector::Zero(v.size());
  out.segment(net.block_offset(layer), net.block_size(layer)) =
      v.segment(net.block_offset(layer), net.block_size(layer));
  return out;
}

void check_layer(const ToyNet& net, Index layer) {
  if (layer < 0 || layer >= net.num_layers()) {
    std::ostringstream os;
    os << "layer " << layer << " out of range for a " << net.num_layers() << "-layer network";
    throw InvalidArgument(os.str());
  }
}

class MlpOracle final : public SampledOracle {
 public:
  MlpOracle(const MlpProblem& p, std::size_t batch_size, std::uint64_t seed)
      : SampledOracle(p.dimension(), p.num_train(), batch_size, seed), p_(p) {}

  Vector gradient(const Vector& w, const Batch& b) const override {
    return mlp_gradient(p_.net(), w, p_.batch_inputs(b), p_.batch_targets(b));
  }
  Vector hvp(const Vector& w, const Vector& s, const Batch& b) const override {
    return mlp_hvp(p_.net(), w, s, p_.batch_inputs(b), p_.batch_targets(b), p_.oracle_mode());
  }

 private:
  const MlpProblem& p_;
};

}  // namespace

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "identity" || name == "linear") return Activation::identity;
  throw ConfigError("unknown activation '" + name + "' (expected tanh or identity)");
}

OutputLoss parse_output_loss(const std::string& name) {
  if (name == "cross_entropy") return OutputLoss::cross_entropy;
  if (name == "squared") return OutputLoss::squared;
  throw ConfigError("unknown loss '" + name + "' (expected cross_entropy or squared)");
}

HvpMode parse_hvp_mode(const std::string& name) {
  if (name == "full") return HvpMode::full;
  if (name == "block_diagonal") return HvpMode::block_diagonal;
  throw ConfigError("unknown hvp mode '" + name + "' (expected full or block_diagonal)");
}

std::string to_string(HvpMode mode) { return mode == HvpMode::full ? "full" : "block_diagonal"; }

Index ToyNet::num_parameters() const { return block_offset(num_layers()); }

Index ToyNet::block_offset(Index l) const {
  Index off = 0;
  for (Index i = 0; i < l; ++i) off += block_size(i);
  return off;
}

Index ToyNet::block_size(Index l) const { return layers[l + 1] * layers[l] + layers[l + 1]; }

void ToyNet::validate() const {
  if (layers.size() < 2) throw InvalidArgument("a network needs at least an input and an output layer");
  for (Index n : layers) {
    if (n <= 0) throw InvalidArgument("layer sizes must be positive");
  }
  if (loss == OutputLoss::cross_entropy && layers.back() < 2) {
    throw InvalidArgument("cross-entropy needs at least two output classes");
  }
  if (!(l2 >= 0) || !std::isfinite(l2)) throw InvalidArgument("l2 must be non-negative");
}

Vector ToyNet::initial_weights(std::uint64_t seed) const {
  validate();
  std::mt19937_64 rng(mix_seed(seed, 0x6e6574));
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector w = Vector::Zero(num_parameters());
  for (Index l = 0; l < num_layers(); ++l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(layers[l]));
    const Index off = block_offset(l);
    for (Index i = 0; i < layers[l + 1] * layers[l]; ++i) w(off + i) = scale * normal(rng);
  }
  return w;
}

double mlp_loss(const ToyNet& net, const Vector& w, const Matrix& X, const Matrix& T) {
  check_inputs(net, w, X, T);
  const ForwardPass f = forward(net, w, X);
  const Matrix& Z = f.a.back();
  double sum = 0.0;
  if (net.loss == OutputLoss::squared) {
    sum = 0.5 * (Z - T).squaredNorm();
  } else {
    for (Index c = 0; c < Z.cols(); ++c) {
      const double m = Z.col(c).maxCoeff();
      const double lse = m + std::log((Z.col(c).array() - m).exp().sum());
      sum += lse - Z(static_cast<Index>(T(0, c)), c);
    }
  }
  return sum / static_cast<double>(X.cols()) + 0.5 * net.l2 * w.squaredNorm();
}

Vector mlp_gradient(const ToyNet& net, const Vector& w, const Matrix& X, const Matrix& T) {
  check_inputs(net, w, X, T);
  Vector g;
  sweep(net, w, X, T, nullptr, &g, nullptr);
  return g;
}

Vector mlp_hvp(const ToyNet& net, const Vector& w, const Vector& s, const Matrix& X, const Matrix& T,
               HvpMode mode) {
  check_inputs(net, w, X, T);
  if (s.size() != w.size()) throw InvalidArgument("direction has the wrong length");
  if (mode == HvpMode::block_diagonal) {
    Vector out = Vector::Zero(w.size());
    for (Index l = 0; l < net.num_layers(); ++l) out += mlp_hvp_block(net, w, s, X, T, l);
    return out;
  }
  Vector hv;
  sweep(net, w, X, T, &s, nullptr, &hv);
  return hv;
}

Vector mlp_hvp_block(const ToyNet& net, const Vector& w, const Vector& s, const Matrix& X,
                     const Matrix& T, Index layer) {
  check_inputs(net, w, X, T);
  check_layer(net, layer);
  if (s.size() != w.size()) throw InvalidArgument("direction has the wrong length");
  const Vector restricted = restrict_to_block(net, s, layer);
  Vector hv;
  sweep(net, w, X, T, &restricted, nullptr, &hv);
  return restrict_to_block(net, hv, layer);
}

Vector mlp_hvp_rows(const ToyNet& net, const Vector& w, const Vector& s, const Matrix& X,
                    const Matrix& T, Index layer) {
  check_layer(net, layer);
  return restrict_to_block(net, mlp_hvp(net, w, s, X, T, HvpMode::full), layer);
}

// ---------------------------------------------------------------------------

MlpProblem::MlpProblem(ToyNet net, Dataset train, Dataset test, std::uint64_t init_seed,
                       HvpMode oracle_mode)
    : net_(std::move(net)), train_(std::move(train)), test_(std::move(test)), init_seed_(init_seed),
      mode_(oracle_mode) {
  net_.validate();
  if (train_.size() == 0) throw InvalidArgument("mlp training set is empty");
  const Vector probe = Vector::Zero(net_.num_parameters());
  check_inputs(net_, probe, train_.features, train_.targets);
  if (test_.size() > 0) check_inputs(net_, probe, test_.features, test_.targets);
}

double MlpProblem::train_loss(const Vector& w) const {
  return mlp_loss(net_, w, train_.features, train_.targets);
}

double MlpProblem::test_loss(const Vector& w) const {
  const Dataset& d = test_.size() > 0 ? test_ : train_;
  return mlp_loss(net_, w, d.features, d.targets) - 0.5 * net_.l2 * w.squaredNorm();
}

std::optional<double> MlpProblem::test_accuracy(const Vector& w) const {
  if (net_.loss != OutputLoss::cross_entropy) return std::nullopt;
  const Dataset& d = test_.size() > 0 ? test_ : train_;
  const Matrix Z = forward(net_, w, d.features).a.back();
  Index correct = 0;
  for (Index c = 0; c < Z.cols(); ++c) {
    Index arg = 0;
    Z.col(c).maxCoeff(&arg);
    correct += arg == static_cast<Index>(d.targets(0, c));
  }
  return static_cast<double>(correct) / static_cast<double>(Z.cols());
}

Vector MlpProblem::full_gradient(const Vector& w) const {
  return mlp_gradient(net_, w, train_.features, train_.targets);
}

Matrix MlpProblem::batch_inputs(const Batch& batch) const {
  Matrix X(train_.features.rows(), static_cast<Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) X.col(static_cast<Index>(i)) = train_.features.col(batch.indices[i]);
  return X;
}

Matrix MlpProblem::batch_targets(const Batch& batch) const {
  Matrix T(train_.targets.rows(), static_cast<Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) T.col(static_cast<Index>(i)) = train_.targets.col(batch.indices[i]);
  return T;
}

std::unique_ptr<HessianOracle> MlpProblem::make_oracle(std::size_t batch_size,
                                                       std::uint64_t seed) const {
  return std::make_unique<MlpOracle>(*this, batch_size, seed);
}

void ClassificationDataSpec::validate() const {
  if (n_train == 0) throw InvalidArgument("n_train must be positive");
  if (input_dim <= 0) throw InvalidArgument("input_dim must be positive");
  if (classes < 2) throw InvalidArgument("need at least two classes");
  if (!(spread > 0)) throw InvalidArgument("spread must be positive");
}

SplitDataset generate_classification_data(const ClassificationDataSpec& spec) {
  spec.validate();
  const Index d = spec.input_dim;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::mt19937_64 centre_rng(mix_seed(spec.seed, 0));
  Matrix centres(d, spec.classes);
  for (Index c = 0; c < spec.classes; ++c) {
    for (Index i = 0; i < d; ++i) centres(i, c) = normal(centre_rng);
  }
  auto make_split = [&](std::size_t n, std::uint64_t stream) {
    std::mt19937_64 rng(mix_seed(spec.seed, stream));
    Dataset out{Matrix(d, static_cast<Index>(n)), Matrix(1, static_cast<Index>(n))};
    for (Index c = 0; c < static_cast<Index>(n); ++c) {
      const Index label = c % spec.classes;
      for (Index i = 0; i < d; ++i) out.features(i, c) = centres(i, label) + spec.spread * normal(rng);
      out.targets(0, c) = static_cast<double>(label);
    }
    return out;
  };
  return {make_split(spec.n_train, 1), make_split(spec.n_test, 2)};
}

}  // namespace probprec
