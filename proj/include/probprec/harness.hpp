#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "probprec/config.hpp"
#include "probprec/preconditioner.hpp"
#include "probprec/problems.hpp"

namespace probprec {

struct RunRecord {
  std::uint64_t step = 0;
  std::uint64_t data_read = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  std::optional<double> test_accuracy;
  double step_length = 0.0;
  double wall_ms = 0.0;
};

struct RunResult {
  std::string label;
  Optimizer optimizer = Optimizer::sgd;
  std::vector<RunRecord> records;
  Vector final_w;
  bool diverged = false;
  /// precond_sgd only: construction failed and the run continued as plain SGD.
  bool fell_back = false;
  /// Samples charged before the first optimizer step (estimation + inference).
  std::uint64_t construction_data_read = 0;
};

/// Column order of every run CSV.
inline constexpr const char* kRunCsvHeader =
    "step,data_read,train_loss,test_loss,test_accuracy,step_length,wall_ms";

/// Shortest round-trip decimal form ("%.17g"); locale independent.
std::string format_double(double v);
void write_run_csv(std::ostream& out, const std::vector<RunRecord>& records);
void write_run_csv(const std::string& path, const std::vector<RunRecord>& records);

/// Divergence rule shared by all optimizers: a non-finite loss, or a loss more
/// than 1e8 times above the starting loss.
bool is_divergent(double loss, double initial_loss);

/// w <- w - lr * g on fresh batches. Records every `record_every` steps, at
/// epoch boundaries and after the last step.
RunResult run_sgd(const Problem& problem, const ExperimentConfig& config);

/// Full mode: estimate, infer, reduce to rank k, then w <- w - lr P^2 g.
/// Scalar mode: the step length is reset to 1 / b0 at each rebuild boundary.
/// Construction failures fall back to plain SGD with a warning.
RunResult run_precond_sgd(const Problem& problem, const ExperimentConfig& config);

/// avg_inv, cg (regression only) or newton_oracle (regression, logistic).
RunResult run_baseline(const Problem& problem, const ExperimentConfig& config);

/// Dispatches on config.optimizer.
RunResult run_experiment(const Problem& problem, const ExperimentConfig& config);

/// Pre-conditioner construction as performed at the start of a full-mode run.
struct Construction {
  PriorEstimates estimates;
  InferenceResult inference;
  SpectralApprox spectral;
  BuiltPreconditioner built;
  std::uint64_t data_read = 0;
};
Construction construct_preconditioner(HessianOracle& oracle, const Vector& w, const ExperimentConfig& config);

struct ComparisonSummary {
  std::string label;
  Optimizer optimizer = Optimizer::sgd;
  double lr = 0.0;
  double final_train_loss = 0.0;
  double best_train_loss = 0.0;
  std::uint64_t final_data_read = 0;
  std::optional<std::uint64_t> data_read_to_target;
  bool diverged = false;
};

struct Comparison {
  std::vector<RunResult> runs;
  std::vector<ComparisonSummary> summary;
  std::optional<double> target_loss;
};

/// Runs every config on one shared problem. All configs must describe the same
/// problem; an empty list or a mismatch throws ConfigError.
Comparison compare(const std::vector<ExperimentConfig>& configs);
/// Merged CSV: label,optimizer followed by the run columns, runs in input order.
void write_comparison_csv(const std::string& path, const Comparison& comparison);
void write_summary_csv(const std::string& path, const Comparison& comparison);

/// Target loss for the summary: config.target_loss if set, otherwise
/// L* (1 + target_suboptimality) for regression; empty when unknown.
std::optional<double> target_loss_for(const Problem& problem, const ExperimentConfig& config);

}  // namespace probprec
