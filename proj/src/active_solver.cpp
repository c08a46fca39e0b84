#include "probprec/active_solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "probprec/errors.hpp"
#include "probprec/log.hpp"

namespace probprec {
namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

double median(std::vector<double> values) {
  const std::size_t n = values.size();
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (n % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

// Sample variance (population form) of each coordinate across the columns of
// `samples`. Values at the level of rounding in the mean are reported as zero.
Vector coordinate_variance(const Matrix& samples, const Vector& mean) {
  const Index k = samples.cols();
  Vector var = Vector::Zero(samples.rows());
  for (Index j = 0; j < samples.rows(); ++j) {
    const double scale = samples.row(j).cwiseAbs().maxCoeff();
    double acc = 0.0;
    for (Index c = 0; c < k; ++c) {
      const double d = samples(j, c) - mean(j);
      acc += d * d;
    }
    acc /= static_cast<double>(k);
    const double floor = 16.0 * kEps * scale;
    var(j) = acc <= floor * floor ? 0.0 : acc;
  }
  return var;
}

}  // namespace

EstimationMode parse_estimation_mode(const std::string& name) {
  if (name == "full") return EstimationMode::full;
  if (name == "scalar") return EstimationMode::scalar;
  throw ConfigError("unknown estimation mode '" + name + "' (expected full or scalar)");
}

std::string to_string(EstimationMode mode) {
  return mode == EstimationMode::full ? "full" : "scalar";
}

void SolverConfig::validate() const {
  if (iterations < 1) throw InvalidArgument("solver iterations must be at least 1");
  if (init_samples < 2) throw InvalidArgument("init_samples must be at least 2");
}

PriorEstimates estimate_parameters(HessianOracle& oracle, const Vector& w, int init_samples,
                                   EstimationMode mode) {
  if (init_samples < 2) throw InvalidArgument("estimate_parameters needs at least 2 initial samples");
  const Index n = oracle.dimension();
  if (w.size() != n) throw InvalidArgument("estimate_parameters: w has the wrong length");

  const auto k = static_cast<Index>(init_samples);
  std::vector<Batch> batches;
  batches.reserve(static_cast<std::size_t>(init_samples));
  Matrix grads(n, k);
  for (Index c = 0; c < k; ++c) {
    batches.push_back(oracle.draw_batch());
    grads.col(c) = oracle.gradient(w, batches.back());
  }
  const Vector g_mean = grads.rowwise().mean();
  const double ss = g_mean.squaredNorm();
  if (!(ss > 0.0)) {
    throw NumericalError("estimate_parameters: the mean gradient is zero, no probe direction available");
  }

  // Products along s = mean gradient, on the same loaded batches.
  const Vector& s = g_mean;
  Vector y_mean = Vector::Zero(n);
  for (Index c = 0; c < k; ++c) {
    y_mean += oracle.hvp(w, s, batches[static_cast<std::size_t>(c)]);
  }
  y_mean /= static_cast<double>(k);

  const double sy = s.dot(y_mean);
  const double yy = y_mean.squaredNorm();
  if (!(sy > 0.0) || !std::isfinite(sy)) {
    std::ostringstream os;
    os << "estimate_parameters: non-positive curvature s^T B s = " << sy
       << " along the mean gradient; retry with fresh batches";
    throw NumericalError(os.str());
  }

  PriorEstimates est;
  est.mean_gradient = g_mean;
  est.w0 = sy / ss;
  if (mode == EstimationMode::full) {
    est.b0 = std::sqrt(yy / sy);
    const Vector var = coordinate_variance(grads, g_mean);
    est.lambda0 = median(std::vector<double>(var.data(), var.data() + var.size())) / std::sqrt(ss);
  } else {
    est.b0 = yy / sy;
    // sum_k g_k^T g_k / K - g^T g equals the mean squared deviation from g.
    const Vector var = coordinate_variance(grads, g_mean);
    est.lambda0 = std::sqrt(var.sum() / static_cast<double>(n));
  }
  return est;
}

Direction next_direction(const PosteriorMean& posterior, const Vector& r, bool normalize) {
  if (r.size() != posterior.dimension()) throw InvalidArgument("next_direction: r has the wrong length");
  if (!(r.squaredNorm() > 0.0)) {
    throw InvalidArgument("next_direction: residual is zero (converged or degenerate gradient)");
  }

  Direction out;
  try {
    out.s = -posterior.solve(r);
  } catch (const NumericalError& e) {
    log::warn(std::string("posterior solve failed, falling back to -r / b0: ") + e.what());
    out.s = -r / posterior.prior().b0;
    out.fallback = true;
  }
  out.raw_norm = out.s.norm();
  if (!std::isfinite(out.raw_norm) || out.raw_norm == 0.0) {
    throw NumericalError("next_direction produced a degenerate probe");
  }
  if (normalize) out.s /= out.raw_norm;
  return out;
}

InferenceResult run_inference(HessianOracle& oracle, const Vector& w,
                              const PriorEstimates& estimates, const SolverConfig& config) {
  config.validate();
  const Index n = oracle.dimension();
  if (w.size() != n || estimates.mean_gradient.size() != n) {
    throw InvalidArgument("run_inference: dimension mismatch between oracle, w and estimates");
  }

  const MatrixPrior prior = estimates.prior();
  const NoiseModel noise = estimates.noise();
  prior.validate();
  noise.validate();

  InferenceResult result{PosteriorMean(prior), ObservationSet{Matrix(n, 0), Matrix(n, 0), Vector(0)},
                         {}, 0};
  Vector r = estimates.mean_gradient;
  const auto start = std::chrono::steady_clock::now();

  for (int i = 1; i <= config.iterations; ++i) {
    const Direction dir = next_direction(result.posterior, r, config.normalize_probes);
    const Batch batch = oracle.draw_batch();
    const Vector y = oracle.hvp(w, dir.s, batch);
    r = oracle.gradient(w, batch);

    ObservationSet extended = result.observations;
    extended.append(dir.s, y, noise);
    try {
      result.posterior = infer_noisy(prior, noise, extended);
    } catch (const NumericalError& e) {
      std::ostringstream os;
      os << "inference failed at iteration " << i << ", keeping the posterior of iteration "
         << i - 1 << ": " << e.what();
      log::warn(os.str());
      break;
    }
    result.observations = std::move(extended);
    result.completed_iterations = i;

    const auto now = std::chrono::steady_clock::now();
    result.log.push_back(IterationRecord{
        i, dir.raw_norm, oracle.data_read(),
        std::chrono::duration<double, std::milli>(now - start).count()});
  }
  return result;
}

std::string iteration_log_csv(const std::vector<IterationRecord>& log) {
  std::string out = "iteration,probe_norm,data_read,wall_ms\n";
  char line[160];
  for (const auto& rec : log) {
    std::snprintf(line, sizeof line, "%d,%.17g,%llu,%.3f\n", rec.iteration, rec.probe_norm,
                  static_cast<unsigned long long>(rec.data_read), rec.wall_ms);
    out += line;
  }
  return out;
}

}  // namespace probprec
