#include "probprec/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "probprec/baselines.hpp"
#include "probprec/errors.hpp"
#include "probprec/log.hpp"

namespace probprec {
namespace {

using Clock = std::chrono::steady_clock;

class Recorder {
 public:
  Recorder(const Problem& problem, const ExperimentConfig& config, RunResult& result)
      : problem_(problem), config_(config), result_(result), start_(Clock::now()) {}

  /// Appends a record; returns false (and marks the run diverged) on divergence.
  bool record(std::uint64_t step, std::uint64_t data_read, const Vector& w, double step_length) {
    RunRecord r;
    r.step = step;
    r.data_read = data_read;
    r.step_length = step_length;
    const bool finite = w.allFinite();
    r.train_loss = finite ? problem_.train_loss(w) : std::numeric_limits<double>::quiet_NaN();
    r.test_loss = finite ? problem_.test_loss(w) : std::numeric_limits<double>::quiet_NaN();
    if (finite) r.test_accuracy = problem_.test_accuracy(w);
    if (config_.record_wall_time) {
      r.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start_).count();
    }
    if (result_.records.empty()) initial_loss_ = r.train_loss;
    result_.records.push_back(r);
    if (is_divergent(r.train_loss, initial_loss_)) {
      result_.diverged = true;
      return false;
    }
    return true;
  }

  double initial_loss() const { return initial_loss_; }

 private:
  const Problem& problem_;
  const ExperimentConfig& config_;
  RunResult& result_;
  Clock::time_point start_;
  double initial_loss_ = 0.0;
};

RunResult start_result(const ExperimentConfig& config) {
  RunResult r;
  r.label = config.effective_label();
  r.optimizer = config.optimizer;
  return r;
}

// Shared first-order loop. `update` applies one step given a stochastic
// gradient; `before_step` runs at the start of each step (1-based). The value
// behind `step_length` is what gets logged and may be changed by either.
template <typename Update, typename BeforeStep>
void descent_loop(const Problem& problem, const ExperimentConfig& config, HessianOracle& oracle, Vector w,
                  RunResult& result, const double& step_length, Update update, BeforeStep before_step) {
  Recorder rec(problem, config, result);
  const std::size_t total = config.total_steps(problem.num_train());
  const std::size_t per_epoch = config.steps_per_epoch(problem.num_train());
  if (!rec.record(0, oracle.data_read(), w, step_length)) {
    result.final_w = w;
    return;
  }
  for (std::size_t t = 1; t <= total; ++t) {
    before_step(t, w);
    update(w, oracle.noisy_gradient(w));
    const bool due = t % config.record_every == 0 || t % per_epoch == 0 || t == total;
    if (due || !w.allFinite()) {
      if (!rec.record(t, oracle.data_read(), w, step_length)) break;
    }
  }
  result.final_w = std::move(w);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_record_fields(std::ostream& out, const RunRecord& r) {
  out << r.step << ',' << r.data_read << ',' << format_double(r.train_loss) << ','
      << format_double(r.test_loss) << ',';
  if (r.test_accuracy) out << format_double(*r.test_accuracy);
  out << ',' << format_double(r.step_length) << ',' << format_double(r.wall_ms) << '\n';
}

const QuadraticProblem& require_quadratic(const Problem& problem, Optimizer opt) {
  const auto* q = dynamic_cast<const QuadraticProblem*>(&problem);
  if (!q) throw ConfigError(to_string(opt) + " is only defined for the regression problem");
  return *q;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_run_csv(std::ostream& out, const std::vector<RunRecord>& records) {
  out << kRunCsvHeader << '\n';
  for (const auto& r : records) write_record_fields(out, r);
}

void write_run_csv(const std::string& path, const std::vector<RunRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  write_run_csv(out, records);
  if (!out) throw ConfigError("failed while writing '" + path + "'");
}

bool is_divergent(double loss, double initial_loss) {
  if (!std::isfinite(loss)) return true;
  return std::isfinite(initial_loss) && loss > 1e8 * std::max(std::abs(initial_loss), 1e-300);
}

RunResult run_sgd(const Problem& problem, const ExperimentConfig& config) {
  config.validate();
  RunResult result = start_result(config);
  auto oracle = problem.make_oracle(config.batch_size, config.seed);
  const double lr = config.lr;
  descent_loop(
      problem, config, *oracle, problem.initial_point(), result, lr,
      [lr](Vector& w, const Vector& g) { w.noalias() -= lr * g; }, [](std::size_t, const Vector&) {});
  return result;
}

Construction construct_preconditioner(HessianOracle& oracle, const Vector& w, const ExperimentConfig& config) {
  const std::uint64_t before = oracle.data_read();
  Construction c;
  c.estimates = estimate_parameters(oracle, w, config.solver.init_samples, EstimationMode::full);
  SolverConfig solver = config.solver;
  solver.mode = EstimationMode::full;
  c.inference = run_inference(oracle, w, c.estimates, solver);
  const Index k = std::min<Index>(config.rank, c.inference.posterior.rank());
  if (k < 1) throw NumericalError("inference produced no usable observations");
  c.spectral = reduce_rank(c.inference.posterior, k);
  c.built = build_preconditioner(c.spectral, config.beta, config.lr);
  c.data_read = oracle.data_read() - before;
  return c;
}

RunResult run_precond_sgd(const Problem& problem, const ExperimentConfig& config) {
  config.validate();
  RunResult result = start_result(config);
  auto oracle = problem.make_oracle(config.batch_size, config.seed);
  const Vector w0 = problem.initial_point();

  if (config.solver.mode == EstimationMode::full) {
    std::optional<Preconditioner> P;
    double step = config.lr;
    try {
      Construction c = construct_preconditioner(*oracle, w0, config);
      step = c.built.scaled_lr;
      P = std::move(c.built.preconditioner);
    } catch (const NumericalError& e) {
      log::warn(std::string("pre-conditioner construction failed, continuing with plain SGD: ") + e.what());
      result.fell_back = true;
    } catch (const InvalidArgument& e) {
      log::warn(std::string("pre-conditioner construction failed, continuing with plain SGD: ") + e.what());
      result.fell_back = true;
    }
    result.construction_data_read = oracle->data_read();
    // The logged step length is the effective one along the complement of U.
    const double logged = P ? step * P->alpha() * P->alpha() : step;
    descent_loop(
        problem, config, *oracle, w0, result, logged,
        [&](Vector& w, const Vector& g) { w.noalias() -= step * (P ? P->apply_p_squared(g) : g); },
        [](std::size_t, const Vector&) {});
    return result;
  }

  // Scalar mode: step length 1 / b0, re-estimated at rebuild boundaries.
  const std::size_t per_epoch = config.steps_per_epoch(problem.num_train());
  double eta = config.lr;
  auto rebuild = [&](std::size_t t, const Vector& w) {
    if ((t - 1) % per_epoch != 0) return;
    const std::size_t epoch = (t - 1) / per_epoch;
    if (epoch == 0 && config.warmup) return;
    if (epoch % config.rebuild_every != 0) return;
    try {
      const auto est = estimate_parameters(*oracle, w, config.solver.init_samples, EstimationMode::scalar);
      eta = scalar_step(est).eta;
    } catch (const NumericalError& e) {
      std::ostringstream os;
      os << "step-length estimate failed at epoch " << epoch << ", keeping " << eta << ": " << e.what();
      log::warn(os.str());
    }
  };
  descent_loop(
      problem, config, *oracle, w0, result, eta, [&](Vector& w, const Vector& g) { w.noalias() -= eta * g; },
      rebuild);
  return result;
}

RunResult run_baseline(const Problem& problem, const ExperimentConfig& config) {
  config.validate();
  RunResult result = start_result(config);
  Recorder rec(problem, config, result);
  const std::size_t total = config.total_steps(problem.num_train());

  switch (config.optimizer) {
    case Optimizer::avg_inv: {
      const auto& q = require_quadratic(problem, config.optimizer);
      rec.record(0, 0, Vector::Zero(q.dimension()), 0.0);
      result.final_w = avg_inv_baseline(q, config.batch_size, total, config.seed,
                                        [&](std::size_t it, const Vector& w, std::uint64_t reads) {
                                          if (it % config.record_every == 0 || it == total) {
                                            return rec.record(it, reads, w, 0.0);
                                          }
                                          return true;
                                        });
      return result;
    }
    case Optimizer::cg: {
      const auto& q = require_quadratic(problem, config.optimizer);
      auto oracle = q.make_oracle(config.batch_size, config.seed);
      const Vector zero = Vector::Zero(q.dimension());
      const Vector b = -oracle->noisy_gradient(zero);
      rec.record(0, oracle->data_read(), zero, 0.0);
      // CG is additionally flagged once the loss rises above its starting value.
      const CgResult r = cg_baseline(*oracle, b, total, [&](std::size_t it, const Vector& w, std::uint64_t reads) {
        const double loss = w.allFinite() ? q.train_loss(w) : std::numeric_limits<double>::quiet_NaN();
        const bool up = !(loss <= rec.initial_loss());
        if (up || it % config.record_every == 0 || it == total) {
          if (!rec.record(it, reads, w, 0.0)) return false;
        }
        if (up) result.diverged = true;
        return !up;
      });
      result.diverged = result.diverged || r.diverged;
      result.final_w = r.w;
      return result;
    }
    case Optimizer::newton_oracle: {
      if (const auto* q = dynamic_cast<const QuadraticProblem*>(&problem)) {
        result.final_w = exact_solution(*q);
        rec.record(1, q->num_train(), result.final_w, 0.0);
        return result;
      }
      if (const auto* l = dynamic_cast<const LogisticProblem*>(&problem)) {
        rec.record(0, 0, Vector::Zero(l->dimension()), 0.0);
        const auto r = newton_logistic(*l, 1e-10, 100, [&](std::size_t it, const Vector& w, std::uint64_t reads) {
          return rec.record(it, reads, w, 0.0);
        });
        result.final_w = r.w;
        return result;
      }
      throw ConfigError("newton_oracle is only defined for the regression and logistic problems");
    }
    default:
      throw ConfigError(to_string(config.optimizer) + " is not a baseline");
  }
}

RunResult run_experiment(const Problem& problem, const ExperimentConfig& config) {
  switch (config.optimizer) {
    case Optimizer::sgd: return run_sgd(problem, config);
    case Optimizer::precond_sgd: return run_precond_sgd(problem, config);
    default: return run_baseline(problem, config);
  }
}

std::optional<double> target_loss_for(const Problem& problem, const ExperimentConfig& config) {
  if (config.target_loss != 0.0) return config.target_loss;
  if (const auto* q = dynamic_cast<const QuadraticProblem*>(&problem)) {
    const double best = q->train_loss(exact_solution(*q));
    return best + config.target_suboptimality * std::abs(best);
  }
  return std::nullopt;
}

Comparison compare(const std::vector<ExperimentConfig>& configs) {
  if (configs.empty()) throw ConfigError("compare needs at least one config");
  const auto reference = to_json(configs.front().problem);
  for (std::size_t i = 1; i < configs.size(); ++i) {
    if (to_json(configs[i].problem) != reference) {
      std::ostringstream os;
      os << "config " << i << " ('" << configs[i].effective_label()
         << "') describes a different problem than config 0";
      throw ConfigError(os.str());
    }
  }
  const auto problem = make_problem(configs.front().problem);
  Comparison out;
  out.target_loss = target_loss_for(*problem, configs.front());
  for (const auto& config : configs) {
    RunResult run = run_experiment(*problem, config);
    ComparisonSummary s;
    s.label = run.label;
    s.optimizer = run.optimizer;
    s.lr = config.lr;
    s.diverged = run.diverged;
    if (!run.records.empty()) {
      s.final_train_loss = run.records.back().train_loss;
      s.final_data_read = run.records.back().data_read;
      s.best_train_loss = run.records.front().train_loss;
      for (const auto& r : run.records) {
        if (r.train_loss < s.best_train_loss) s.best_train_loss = r.train_loss;
        if (out.target_loss && !s.data_read_to_target && r.train_loss <= *out.target_loss) {
          s.data_read_to_target = r.data_read;
        }
      }
    }
    out.summary.push_back(s);
    out.runs.push_back(std::move(run));
  }
  return out;
}

void write_comparison_csv(const std::string& path, const Comparison& comparison) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << "label,optimizer," << kRunCsvHeader << '\n';
  for (const auto& run : comparison.runs) {
    for (const auto& r : run.records) {
      out << csv_field(run.label) << ',' << to_string(run.optimizer) << ',';
      write_record_fields(out, r);
    }
  }
  if (!out) throw ConfigError("failed while writing '" + path + "'");
}

void write_summary_csv(const std::string& path, const Comparison& comparison) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << "label,optimizer,lr,final_train_loss,best_train_loss,final_data_read,data_read_to_target,"
         "target_loss,diverged\n";
  for (const auto& s : comparison.summary) {
    out << csv_field(s.label) << ',' << to_string(s.optimizer) << ',' << format_double(s.lr) << ','
        << format_double(s.final_train_loss) << ',' << format_double(s.best_train_loss) << ','
        << s.final_data_read << ',';
    if (s.data_read_to_target) out << *s.data_read_to_target;
    out << ',';
    if (comparison.target_loss) out << format_double(*comparison.target_loss);
    out << ',' << (s.diverged ? 1 : 0) << '\n';
  }
  if (!out) throw ConfigError("failed while writing '" + path + "'");
}

}  // namespace probprec
