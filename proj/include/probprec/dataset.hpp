#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "probprec/linalg.hpp"
#include "probprec/oracle.hpp"

namespace probprec {

/// Column-per-sample data: features is d x n, targets is t x n.
struct Dataset {
  Matrix features;
  Matrix targets;

  std::size_t size() const { return static_cast<std::size_t>(features.cols()); }
  Index input_dim() const { return features.rows(); }
};

/// CSV layout: one header row, then one sample per line with the d feature
/// columns followed by the `target_columns` target columns. Blank lines are
/// skipped. Throws ConfigError on malformed input.
Dataset read_csv(const std::string& path, Index target_columns = 1);
void write_csv(const std::string& path, const Dataset& data);

/// Uniform mini-batches without replacement. Draw number k is a pure function
/// of (seed, k), so streams are reproducible independently of call history.
class BatchSampler {
 public:
  BatchSampler(std::size_t population, std::size_t batch_size, std::uint64_t seed);

  Batch draw();
  std::size_t population() const { return population_; }
  std::size_t batch_size() const { return batch_size_; }
  std::uint64_t draws() const { return counter_; }

 private:
  std::size_t population_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

/// splitmix64 finalizer; used to derive independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace probprec
