#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "probprec/problems.hpp"

namespace probprec {

enum class Activation { tanh, identity };
enum class OutputLoss { cross_entropy, squared };
enum class HvpMode { full, block_diagonal };

Activation parse_activation(const std::string& name);
OutputLoss parse_output_loss(const std::string& name);
HvpMode parse_hvp_mode(const std::string& name);
std::string to_string(HvpMode mode);

/// Fully connected network. Parameters are packed layer by layer as the
/// column-major weight matrix (out x in) followed by the bias.
struct ToyNet {
  std::vector<Index> layers;  // {input, hidden..., output}
  Activation activation = Activation::tanh;
  OutputLoss loss = OutputLoss::cross_entropy;
  double l2 = 1e-4;

  Index num_layers() const { return static_cast<Index>(layers.size()) - 1; }
  Index num_parameters() const;
  /// Offset and length of layer l's block (weights and bias) in the packed vector.
  Index block_offset(Index l) const;
  Index block_size(Index l) const;
  void validate() const;

  /// Scaled normal initialization (std 1/sqrt(fan_in)), zero biases.
  Vector initial_weights(std::uint64_t seed) const;
};

/// Targets: for cross_entropy a 1 x b row of class indices, for squared an
/// out x b matrix. Losses are batch means plus l2/2 ||w||^2.
double mlp_loss(const ToyNet& net, const Vector& w, const Matrix& X, const Matrix& T);
Vector mlp_gradient(const ToyNet& net, const Vector& w, const Matrix& X, const Matrix& T);

/// Exact Hessian-vector product by a forward, backward and R-operator sweep.
/// block_diagonal drops all cross-layer curvature.
Vector mlp_hvp(const ToyNet& net, const Vector& w, const Vector& s, const Matrix& X, const Matrix& T,
               HvpMode mode = HvpMode::full);
/// Product with layer l's diagonal block: s is treated as zero outside the
/// block and the output is zero outside the block.
Vector mlp_hvp_block(const ToyNet& net, const Vector& w, const Vector& s, const Matrix& X,
                     const Matrix& T, Index layer);
/// Rows of layer l's block of H s for unrestricted s (cross-block products included).
Vector mlp_hvp_rows(const ToyNet& net, const Vector& w, const Vector& s, const Matrix& X,
                    const Matrix& T, Index layer);

class MlpProblem final : public Problem {
 public:
  MlpProblem(ToyNet net, Dataset train, Dataset test, std::uint64_t init_seed,
             HvpMode oracle_mode = HvpMode::full);

  std::string kind() const override { return "mlp"; }
  Index dimension() const override { return net_.num_parameters(); }
  std::size_t num_train() const override { return train_.size(); }

  double train_loss(const Vector& w) const override;
  double test_loss(const Vector& w) const override;
  std::optional<double> test_accuracy(const Vector& w) const override;
  Vector full_gradient(const Vector& w) const override;
  Vector initial_point() const override { return net_.initial_weights(init_seed_); }
  std::unique_ptr<HessianOracle> make_oracle(std::size_t batch_size,
                                             std::uint64_t seed) const override;

  const ToyNet& net() const { return net_; }
  const Dataset& train() const { return train_; }
  HvpMode oracle_mode() const { return mode_; }

  Matrix batch_inputs(const Batch& batch) const;
  Matrix batch_targets(const Batch& batch) const;

 private:
  ToyNet net_;
  Dataset train_;
  Dataset test_;
  std::uint64_t init_seed_;
  HvpMode mode_;
};

/// Gaussian blobs around random class centres.
struct ClassificationDataSpec {
  std::size_t n_train = 4000;
  std::size_t n_test = 1000;
  Index input_dim = 20;
  Index classes = 10;
  double spread = 1.0;  // within-class std relative to centre norm scale
  std::uint64_t seed = 0;

  void validate() const;
};

SplitDataset generate_classification_data(const ClassificationDataSpec& spec);

}  // namespace probprec
