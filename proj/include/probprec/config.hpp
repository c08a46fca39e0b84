#pragma once

// Experiment configuration. Values are resolved in three layers: built-in
// defaults, then the JSON config file, then command-line overrides (which are
// themselves expressed as a JSON object merged on top).

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "probprec/active_solver.hpp"
#include "probprec/problems.hpp"

namespace probprec {

enum class ProblemKind { regression, logistic, mlp };
enum class Optimizer { sgd, precond_sgd, avg_inv, cg, newton_oracle };

ProblemKind parse_problem_kind(const std::string& name);
std::string to_string(ProblemKind kind);
Optimizer parse_optimizer(const std::string& name);
std::string to_string(Optimizer opt);

struct ProblemSpec {
  ProblemKind kind = ProblemKind::regression;
  std::string train_csv;  // synthetic data when empty
  std::string test_csv;
  std::size_t n_train = 0;  // 0: the kind's default size
  std::size_t n_test = 0;
  Index input_dim = 0;      // 0: the kind's default
  std::uint64_t data_seed = 0;
  double regularization = -1.0;  // < 0: the kind's default

  // regression
  double noise = 0.1;
  double input_scale_lo = 0.1;
  double input_scale_hi = 3.0;
  double feature_scale_lo = 1e-3;
  double feature_scale_hi = 1.0;
  // logistic
  double separation = 3.0;
  // mlp
  Index classes = 10;
  std::vector<Index> hidden{32};
  std::string activation = "tanh";
  double spread = 1.0;
  std::string hvp_mode = "full";
  std::uint64_t init_seed = 0;

  void validate() const;
};

struct ExperimentConfig {
  ProblemSpec problem;
  Optimizer optimizer = Optimizer::sgd;
  std::string label;  // defaults to "<optimizer>_lr<lr>"
  std::size_t batch_size = 256;
  double lr = 0.01;
  double epochs = 1.0;
  std::size_t steps = 0;  // when positive, overrides epochs
  std::size_t record_every = 10;
  SolverConfig solver;
  Index rank = 16;
  double beta = 1.0;
  std::size_t rebuild_every = 1;  // scalar mode, in epochs
  bool warmup = true;             // scalar mode: first epoch at the base lr
  std::uint64_t seed = 0;
  bool record_wall_time = false;  // wall_ms is 0 otherwise, keeping CSVs reproducible
  double target_suboptimality = 1e-2;
  double target_loss = 0.0;  // explicit target for the summary; 0 derives it when possible

  void validate() const;
  std::string effective_label() const;
  std::size_t steps_per_epoch(std::size_t num_train) const;
  std::size_t total_steps(std::size_t num_train) const;
};

nlohmann::json to_json(const ProblemSpec& spec);
nlohmann::json to_json(const ExperimentConfig& config);

/// Builds a config from defaults plus `doc`. Unknown keys are rejected so that
/// typos do not silently fall back to defaults. Throws ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& doc);
/// Reads a JSON file and applies `overrides` (a JSON object) on top.
ExperimentConfig load_config(const std::string& path, const nlohmann::json& overrides = nlohmann::json::object());
nlohmann::json read_json_file(const std::string& path);

/// Expands a comparison document: either a single config, or
/// {"base": {...}, "runs": [{...}, ...]} where each run is merged onto base.
std::vector<nlohmann::json> expand_runs(const nlohmann::json& doc);

/// Recursive merge of `patch` onto `base` (objects merge, everything else replaces).
nlohmann::json merge_json(nlohmann::json base, const nlohmann::json& patch);

/// Instantiates the problem, generating synthetic data or reading CSVs.
std::unique_ptr<Problem> make_problem(const ProblemSpec& spec);
/// Generates the synthetic train/test split for a spec (CSV paths are ignored).
SplitDataset generate_data(const ProblemSpec& spec);

}  // namespace probprec
