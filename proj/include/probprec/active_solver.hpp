#pragma once

// Active inference of a Hessian from noisy Hessian-vector products: empirical
// prior / noise estimation, then a loop that picks each new probe by applying
// the inverse of the current posterior mean to a fresh stochastic gradient.

#include <cstdint>
#include <string>
#include <vector>

#include "probprec/inference.hpp"
#include "probprec/oracle.hpp"

namespace probprec {

enum class EstimationMode {
  full,    // pre-conditioning: 1/b0 = sqrt(s^T y / y^T y)
  scalar,  // step-size adaptation: 1/b0 = s^T y / y^T y
};

EstimationMode parse_estimation_mode(const std::string& name);
std::string to_string(EstimationMode mode);

struct PriorEstimates {
  double b0 = 1.0;
  double w0 = 1.0;
  double lambda0 = 0.0;
  Vector mean_gradient;

  MatrixPrior prior() const { return MatrixPrior{b0, w0, mean_gradient.size()}; }
  NoiseModel noise() const { return NoiseModel{lambda0}; }
};

struct SolverConfig {
  int iterations = 16;
  int init_samples = 5;
  bool normalize_probes = true;
  EstimationMode mode = EstimationMode::full;

  void validate() const;
};

/// Draws `init_samples` batches at w, takes s = mean gradient and y_k = B~_k s
/// on the same batches, and forms
///   w0 = s^T y / s^T s,  1/b0 = sqrt(s^T y / y^T y)     (full)
///                        1/b0 = s^T y / y^T y           (scalar)
/// with y the batch mean of the products. The noise scale is
///   full:   median over coordinates j of Var_k[g_kj], divided by sqrt(s^T s)
///   scalar: sqrt((sum_k g_k^T g_k / K - g^T g) / N), g the mean gradient.
/// Throws NumericalError on a zero mean gradient or s^T y <= 0.
PriorEstimates estimate_parameters(HessianOracle& oracle, const Vector& w, int init_samples,
                                   EstimationMode mode);

struct Direction {
  Vector s;
  double raw_norm = 0.0;   // ||s|| before normalization
  bool fallback = false;   // true when the posterior solve failed and -r / b0 was used
};

/// s = -B_m^{-1} r, optionally scaled to unit length. A failed solve falls back
/// to -r / b0 with a warning. Throws InvalidArgument for r = 0.
Direction next_direction(const PosteriorMean& posterior, const Vector& r, bool normalize);

struct IterationRecord {
  int iteration = 0;
  double probe_norm = 0.0;  // before normalization
  std::uint64_t data_read = 0;
  double wall_ms = 0.0;
};

struct InferenceResult {
  PosteriorMean posterior;
  ObservationSet observations;
  std::vector<IterationRecord> log;
  /// Iterations whose observation was absorbed into the posterior. Smaller than
  /// config.iterations when inference failed and the previous posterior was kept.
  int completed_iterations = 0;
};

/// The active loop. r_0 is the mean gradient from estimation; iteration i picks
/// s_i = next_direction(B_{i-1}, r_{i-1}), loads one batch, observes
/// y_i = B~ s_i and r_i = grad L~(w) on it, and re-infers B_i from all
/// observations (lambda0 == 0 uses the noise-free update). If inference fails at
/// iteration i the loop stops and returns B_{i-1}.
InferenceResult run_inference(HessianOracle& oracle, const Vector& w,
                              const PriorEstimates& estimates, const SolverConfig& config);

/// Writes the per-iteration log as CSV: iteration,probe_norm,data_read,wall_ms.
std::string iteration_log_csv(const std::vector<IterationRecord>& log);

}  // namespace probprec
