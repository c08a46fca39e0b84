#pragma once

#include <cstdint>
#include <vector>

#include "probprec/linalg.hpp"

namespace probprec {

/// Indices of the data points in one mini-batch.
struct Batch {
  std::vector<Index> indices;
  std::size_t size() const { return indices.size(); }
};

/// Source of stochastic gradients and Hessian-vector products.
///
/// Every call to draw_batch() loads a fresh, independent mini-batch and charges
/// its size to data_read(). Gradient and product evaluations on a batch that
/// has already been drawn are free, which lets a caller evaluate both quantities
/// on the same loaded data. noisy_gradient / noisy_hvp are the one-shot forms.
class HessianOracle {
 public:
  virtual ~HessianOracle() = default;

  virtual Index dimension() const = 0;
  virtual std::size_t batch_size() const = 0;

  virtual Batch draw_batch() = 0;
  virtual Vector gradient(const Vector& w, const Batch& batch) const = 0;
  virtual Vector hvp(const Vector& w, const Vector& s, const Batch& batch) const = 0;

  Vector noisy_gradient(const Vector& w) { return gradient(w, draw_batch()); }
  Vector noisy_hvp(const Vector& w, const Vector& s) { return hvp(w, s, draw_batch()); }

  /// Cumulative number of data points loaded so far.
  std::uint64_t data_read() const { return data_read_; }

 protected:
  void charge(std::uint64_t samples) { data_read_ += samples; }

 private:
  std::uint64_t data_read_ = 0;
};

/// Deterministic quadratic f(w) = 1/2 w^T B w - b^T w. Gradients and products
/// are exact; each drawn "batch" charges `charge_per_call` to data_read.
class ExactQuadraticOracle final : public HessianOracle {
 public:
  ExactQuadraticOracle(Matrix B, Vector b, std::size_t charge_per_call = 1);

  Index dimension() const override { return B_.rows(); }
  std::size_t batch_size() const override { return charge_; }
  Batch draw_batch() override;
  Vector gradient(const Vector& w, const Batch& batch) const override;
  Vector hvp(const Vector& w, const Vector& s, const Batch& batch) const override;

  const Matrix& hessian() const { return B_; }

 private:
  Matrix B_;
  Vector b_;
  std::size_t charge_;
};

}  // namespace probprec
