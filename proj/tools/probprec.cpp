// probprec command-line tool.
//
// Exit codes: 0 success, 1 configuration or usage error, 2 numerical
// divergence or numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "probprec/config.hpp"
#include "probprec/errors.hpp"
#include "probprec/harness.hpp"
#include "probprec/log.hpp"
#include "probprec/serialization.hpp"

namespace {

using nlohmann::json;
using namespace probprec;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitDiverged = 2;

// Flags that override values from the config file.
struct Overrides {
  std::optional<std::string> optimizer, label, mode, kind, train_csv, test_csv;
  std::optional<double> lr, epochs, beta;
  std::optional<std::size_t> batch_size, steps, record_every, rebuild_every, n_train, n_test;
  std::optional<int> iterations, init_samples;
  std::optional<Index> rank;
  std::optional<std::uint64_t> seed, data_seed;
  std::optional<bool> warmup;
  bool timing = false;

  void attach(CLI::App& app) {
    app.add_option("--optimizer", optimizer, "sgd | precond_sgd | avg_inv | cg | newton_oracle");
    app.add_option("--label", label, "Run label used in comparison output");
    app.add_option("--lr", lr, "Base learning rate");
    app.add_option("--batch-size", batch_size, "Mini-batch size");
    app.add_option("--epochs", epochs, "Budget in epochs");
    app.add_option("--steps", steps, "Budget in steps (takes precedence over epochs)");
    app.add_option("--record-every", record_every, "Record interval in steps");
    app.add_option("--seed", seed, "Seed of the batch stream");
    app.add_option("--mode", mode, "Solver mode: full | scalar");
    app.add_option("--iterations", iterations, "Solver iterations m");
    app.add_option("--init-samples", init_samples, "Batches used for parameter estimation");
    app.add_option("--rank", rank, "Pre-conditioner rank k");
    app.add_option("--beta", beta, "Target eigenvalue scale");
    app.add_option("--rebuild-every", rebuild_every, "Scalar mode rebuild interval in epochs");
    app.add_option("--warmup", warmup, "Scalar mode: first epoch at the base lr (true/false)");
    app.add_option("--kind", kind, "Problem kind: regression | logistic | mlp");
    app.add_option("--train-csv", train_csv, "Training data CSV");
    app.add_option("--test-csv", test_csv, "Test data CSV");
    app.add_option("--n-train", n_train, "Synthetic training set size");
    app.add_option("--n-test", n_test, "Synthetic test set size");
    app.add_option("--data-seed", data_seed, "Seed of the synthetic data generator");
    app.add_flag("--timing", timing, "Record wall-clock time (makes output non-reproducible)");
  }

  json to_json() const {
    json j = json::object();
    auto set = [&](const char* key, const auto& v) {
      if (v) j[key] = *v;
    };
    set("optimizer", optimizer);
    set("label", label);
    set("lr", lr);
    set("batch_size", batch_size);
    set("epochs", epochs);
    set("steps", steps);
    set("record_every", record_every);
    set("seed", seed);
    if (timing) j["record_wall_time"] = true;
    json solver = json::object();
    if (mode) solver["mode"] = *mode;
    if (iterations) solver["iterations"] = *iterations;
    if (init_samples) solver["init_samples"] = *init_samples;
    if (rank) solver["rank"] = *rank;
    if (beta) solver["beta"] = *beta;
    if (rebuild_every) solver["rebuild_every"] = *rebuild_every;
    if (warmup) solver["warmup"] = *warmup;
    if (!solver.empty()) j["solver"] = solver;
    json problem = json::object();
    if (kind) problem["kind"] = *kind;
    if (train_csv) problem["train_csv"] = *train_csv;
    if (test_csv) problem["test_csv"] = *test_csv;
    if (n_train) problem["n_train"] = *n_train;
    if (n_test) problem["n_test"] = *n_test;
    if (data_seed) problem["data_seed"] = *data_seed;
    if (!problem.empty()) j["problem"] = problem;
    return j;
  }
};

int cmd_gen_data(const std::string& config_path, const Overrides& ov, const std::string& out,
                 const std::string& test_out) {
  const ExperimentConfig config = load_config(config_path, ov.to_json());
  const SplitDataset data = generate_data(config.problem);
  write_csv(out, data.train);
  if (!test_out.empty()) write_csv(test_out, data.test);
  std::cout << "wrote " << data.train.size() << " training samples to " << out;
  if (!test_out.empty()) std::cout << " and " << data.test.size() << " test samples to " << test_out;
  std::cout << "\n";
  return kExitOk;
}

int cmd_estimate(const std::string& config_path, const Overrides& ov, const std::string& out) {
  const ExperimentConfig config = load_config(config_path, ov.to_json());
  const auto problem = make_problem(config.problem);
  auto oracle = problem->make_oracle(config.batch_size, config.seed);
  const auto est =
      estimate_parameters(*oracle, problem->initial_point(), config.solver.init_samples, config.solver.mode);
  json j = to_json(est);
  j["mode"] = to_string(config.solver.mode);
  j["data_read"] = oracle->data_read();
  std::cout << j.dump(2) << "\n";
  if (!out.empty()) save_state(out, SavedState{est, std::nullopt, std::nullopt});
  return kExitOk;
}

int cmd_solve(const std::string& config_path, const Overrides& ov, const std::string& out,
              const std::string& log_path) {
  const ExperimentConfig config = load_config(config_path, ov.to_json());
  const auto problem = make_problem(config.problem);
  auto oracle = problem->make_oracle(config.batch_size, config.seed);
  const Vector w = problem->initial_point();
  const auto est = estimate_parameters(*oracle, w, config.solver.init_samples, EstimationMode::full);
  const auto inf = run_inference(*oracle, w, est, config.solver);
  save_state(out, SavedState{est, inf.posterior, std::nullopt});
  if (!log_path.empty()) {
    std::ofstream log_out(log_path, std::ios::binary);
    if (!log_out) throw ConfigError("cannot write '" + log_path + "'");
    log_out << iteration_log_csv(inf.log);
  }
  std::cout << "posterior of rank " << inf.posterior.rank() << " after " << inf.completed_iterations
            << " iterations, data_read " << oracle->data_read() << ", saved to " << out << "\n";
  return kExitOk;
}

int cmd_precond(const std::string& config_path, const Overrides& ov, const std::string& out) {
  const ExperimentConfig config = load_config(config_path, ov.to_json());
  const auto problem = make_problem(config.problem);
  auto oracle = problem->make_oracle(config.batch_size, config.seed);
  const Construction c = construct_preconditioner(*oracle, problem->initial_point(), config);
  save_state(out, SavedState{c.estimates, c.inference.posterior, c.built.preconditioner});
  const auto& p = c.built.preconditioner;
  std::cout << "pre-conditioner of rank " << p.rank() << ", alpha^2 " << p.alpha() * p.alpha()
            << ", data_read " << c.data_read << ", saved to " << out << "\n";
  return kExitOk;
}

int cmd_run(const std::string& config_path, const Overrides& ov, const std::string& out) {
  const ExperimentConfig config = load_config(config_path, ov.to_json());
  const auto problem = make_problem(config.problem);
  const RunResult result = run_experiment(*problem, config);
  if (out.empty() || out == "-") {
    write_run_csv(std::cout, result.records);
  } else {
    write_run_csv(out, result.records);
  }
  if (result.diverged) {
    std::cerr << "run '" << result.label << "' diverged\n";
    return kExitDiverged;
  }
  return kExitOk;
}

int cmd_compare(const std::vector<std::string>& config_paths, const Overrides& ov, const std::string& out,
                const std::string& summary) {
  std::vector<ExperimentConfig> configs;
  for (const auto& path : config_paths) {
    for (const auto& doc : expand_runs(read_json_file(path))) {
      configs.push_back(config_from_json(merge_json(doc, ov.to_json())));
    }
  }
  const Comparison cmp = compare(configs);
  write_comparison_csv(out, cmp);
  if (!summary.empty()) write_summary_csv(summary, cmp);
  bool any_diverged = false;
  for (const auto& s : cmp.summary) {
    std::cout << s.label << ": final train loss " << format_double(s.final_train_loss) << ", data_read to target ";
    if (s.data_read_to_target) {
      std::cout << *s.data_read_to_target;
    } else {
      std::cout << "-";
    }
    std::cout << (s.diverged ? " (diverged)" : "") << "\n";
    any_diverged = any_diverged || s.diverged;
  }
  return any_diverged ? kExitDiverged : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic Hessian estimation and pre-conditioned SGD experiments"};
  app.require_subcommand(1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "debug | info | warn | error | off");

  std::string config_path, out, test_out, log_path, summary;
  std::vector<std::string> config_paths;
  Overrides ov;

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset as CSV");
  gen->add_option("--config", config_path, "Config JSON (problem section is used)");
  gen->add_option("--out", out, "Training CSV")->required();
  gen->add_option("--test-out", test_out, "Test CSV");
  ov.attach(*gen);

  auto* est = app.add_subcommand("estimate", "Print prior and noise estimates");
  est->add_option("--config", config_path, "Config JSON");
  est->add_option("--out", out, "Also save the estimates to this file");
  ov.attach(*est);

  auto* solve = app.add_subcommand("solve", "Run the active solver and save the posterior");
  solve->add_option("--config", config_path, "Config JSON");
  solve->add_option("--out", out, "Output JSON")->required();
  solve->add_option("--log", log_path, "Per-iteration CSV log");
  ov.attach(*solve);

  auto* pre = app.add_subcommand("precond", "Build and save a pre-conditioner");
  pre->add_option("--config", config_path, "Config JSON");
  pre->add_option("--out", out, "Output JSON")->required();
  ov.attach(*pre);

  auto* run = app.add_subcommand("run", "Run one optimizer and write its CSV");
  run->add_option("--config", config_path, "Config JSON");
  run->add_option("--out", out, "Output CSV ('-' or omitted: stdout)");
  ov.attach(*run);

  auto* cmp = app.add_subcommand("compare", "Run several configs on one problem");
  cmp->add_option("--config", config_paths, "Config or comparison JSON (repeatable)")->required();
  cmp->add_option("--out", out, "Merged CSV")->required();
  cmp->add_option("--summary", summary, "Summary CSV");
  ov.attach(*cmp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Error& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (log_level == "debug") {
      log::set_level(log::Level::debug);
    } else if (log_level == "info") {
      log::set_level(log::Level::info);
    } else if (log_level == "warn") {
      log::set_level(log::Level::warn);
    } else if (log_level == "error") {
      log::set_level(log::Level::error);
    } else if (log_level == "off") {
      log::set_level(log::Level::off);
    } else {
      throw ConfigError("unknown log level '" + log_level + "'");
    }

    if (*gen) return cmd_gen_data(config_path, ov, out, test_out);
    if (*est) return cmd_estimate(config_path, ov, out);
    if (*solve) return cmd_solve(config_path, ov, out, log_path);
    if (*pre) return cmd_precond(config_path, ov, out);
    if (*run) return cmd_run(config_path, ov, out);
    if (*cmp) return cmd_compare(config_paths, ov, out, summary);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitDiverged;
  }
  return kExitConfig;
}
