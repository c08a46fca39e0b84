#include "probprec/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "probprec/errors.hpp"
#include "probprec/mlp.hpp"

namespace probprec {
namespace {

using nlohmann::json;

struct Defaults {
  std::size_t n_train;
  std::size_t n_test;
  Index input_dim;
  double regularization;
};

Defaults defaults_for(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::regression: return {44484, 4449, 21, 1e-3};
    case ProblemKind::logistic: return {10000, 2000, 784, 1e-3};
    case ProblemKind::mlp: return {4000, 1000, 20, 1e-4};
  }
  return {0, 0, 0, 0};
}

// Reads typed fields out of one JSON object and rejects keys nobody asked for.
class Reader {
 public:
  Reader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw ConfigError(where_ + " must be a JSON object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    if (it == obj_.end() || it->is_null()) return;
    try {
      if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
        if (it->is_number_integer() && it->template get<long long>() < 0) {
          throw ConfigError(where_ + "." + key + " must be non-negative");
        }
        if (!it->is_number_integer() && !it->is_number_unsigned()) {
          throw ConfigError(where_ + "." + key + " must be an integer");
        }
      }
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  const json* object(const char* key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    return it == obj_.end() || it->is_null() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& item : obj_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown key '" + item.key() + "' in " + where_);
    }
  }

 private:
  const json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

ProblemSpec problem_from_json(const json& doc) {
  ProblemSpec s;
  Reader r(doc, "problem");
  std::string kind = to_string(s.kind);
  r.read("kind", kind);
  s.kind = parse_problem_kind(kind);
  r.read("train_csv", s.train_csv);
  r.read("test_csv", s.test_csv);
  r.read("n_train", s.n_train);
  r.read("n_test", s.n_test);
  r.read("input_dim", s.input_dim);
  r.read("data_seed", s.data_seed);
  r.read("regularization", s.regularization);
  r.read("noise", s.noise);
  r.read("input_scale_lo", s.input_scale_lo);
  r.read("input_scale_hi", s.input_scale_hi);
  r.read("feature_scale_lo", s.feature_scale_lo);
  r.read("feature_scale_hi", s.feature_scale_hi);
  r.read("separation", s.separation);
  r.read("classes", s.classes);
  r.read("hidden", s.hidden);
  r.read("activation", s.activation);
  r.read("spread", s.spread);
  r.read("hvp_mode", s.hvp_mode);
  r.read("init_seed", s.init_seed);
  r.finish();
  // Fill kind-specific defaults so that equal problems compare equal.
  const Defaults d = defaults_for(s.kind);
  if (s.n_train == 0) s.n_train = d.n_train;
  if (s.n_test == 0 && doc.find("n_test") == doc.end()) s.n_test = d.n_test;
  if (s.input_dim == 0) s.input_dim = d.input_dim;
  if (s.regularization < 0) s.regularization = d.regularization;
  s.validate();
  return s;
}

std::string format_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

ProblemKind parse_problem_kind(const std::string& name) {
  if (name == "regression") return ProblemKind::regression;
  if (name == "logistic") return ProblemKind::logistic;
  if (name == "mlp") return ProblemKind::mlp;
  throw ConfigError("unknown problem kind '" + name + "' (expected regression, logistic or mlp)");
}

std::string to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::regression: return "regression";
    case ProblemKind::logistic: return "logistic";
    case ProblemKind::mlp: return "mlp";
  }
  return "?";
}

Optimizer parse_optimizer(const std::string& name) {
  if (name == "sgd") return Optimizer::sgd;
  if (name == "precond_sgd") return Optimizer::precond_sgd;
  if (name == "avg_inv") return Optimizer::avg_inv;
  if (name == "cg") return Optimizer::cg;
  if (name == "newton_oracle") return Optimizer::newton_oracle;
  throw ConfigError("unknown optimizer '" + name +
                    "' (expected sgd, precond_sgd, avg_inv, cg or newton_oracle)");
}

std::string to_string(Optimizer opt) {
  switch (opt) {
    case Optimizer::sgd: return "sgd";
    case Optimizer::precond_sgd: return "precond_sgd";
    case Optimizer::avg_inv: return "avg_inv";
    case Optimizer::cg: return "cg";
    case Optimizer::newton_oracle: return "newton_oracle";
  }
  return "?";
}

void ProblemSpec::validate() const {
  if (n_train == 0) throw ConfigError("problem.n_train must be positive");
  if (input_dim <= 0) throw ConfigError("problem.input_dim must be positive");
  if (!(regularization > 0) || !std::isfinite(regularization)) {
    if (!(kind == ProblemKind::mlp && regularization == 0.0)) {
      throw ConfigError("problem.regularization must be positive");
    }
  }
  if (!(noise >= 0)) throw ConfigError("problem.noise must be non-negative");
  if (!(input_scale_lo > 0) || !(input_scale_hi >= input_scale_lo)) {
    throw ConfigError("problem input scales need 0 < lo <= hi");
  }
  if (!(feature_scale_lo > 0) || !(feature_scale_hi >= feature_scale_lo)) {
    throw ConfigError("problem feature scales need 0 < lo <= hi");
  }
  if (!(separation >= 0)) throw ConfigError("problem.separation must be non-negative");
  if (classes < 2) throw ConfigError("problem.classes must be at least 2");
  for (Index h : hidden) {
    if (h <= 0) throw ConfigError("problem.hidden sizes must be positive");
  }
  if (!(spread > 0)) throw ConfigError("problem.spread must be positive");
  parse_activation(activation);
  parse_hvp_mode(hvp_mode);
}

void ExperimentConfig::validate() const {
  problem.validate();
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(lr >= 0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and non-negative");
  if (steps == 0 && !(epochs > 0)) throw ConfigError("the budget must be positive (epochs or steps)");
  if (record_every == 0) throw ConfigError("record_every must be positive");
  if (solver.iterations < 1) throw ConfigError("solver.iterations must be positive");
  if (solver.init_samples < 2) throw ConfigError("solver.init_samples must be at least 2");
  if (rank < 1) throw ConfigError("solver.rank must be positive");
  if (!(beta > 0)) throw ConfigError("solver.beta must be positive");
  if (rebuild_every == 0) throw ConfigError("solver.rebuild_every must be positive");
  if (!(target_suboptimality > 0)) throw ConfigError("target_suboptimality must be positive");
}

std::string ExperimentConfig::effective_label() const {
  if (!label.empty()) return label;
  if (optimizer == Optimizer::sgd || optimizer == Optimizer::precond_sgd) {
    return to_string(optimizer) + "_lr" + format_number(lr);
  }
  return to_string(optimizer);
}

std::size_t ExperimentConfig::steps_per_epoch(std::size_t num_train) const {
  return std::max<std::size_t>(1, (num_train + batch_size - 1) / batch_size);
}

std::size_t ExperimentConfig::total_steps(std::size_t num_train) const {
  if (steps > 0) return steps;
  return std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(epochs * static_cast<double>(steps_per_epoch(num_train)))));
}

nlohmann::json to_json(const ProblemSpec& s) {
  return json{{"kind", to_string(s.kind)},
              {"train_csv", s.train_csv},
              {"test_csv", s.test_csv},
              {"n_train", s.n_train},
              {"n_test", s.n_test},
              {"input_dim", s.input_dim},
              {"data_seed", s.data_seed},
              {"regularization", s.regularization},
              {"noise", s.noise},
              {"input_scale_lo", s.input_scale_lo},
              {"input_scale_hi", s.input_scale_hi},
              {"feature_scale_lo", s.feature_scale_lo},
              {"feature_scale_hi", s.feature_scale_hi},
              {"separation", s.separation},
              {"classes", s.classes},
              {"hidden", s.hidden},
              {"activation", s.activation},
              {"spread", s.spread},
              {"hvp_mode", s.hvp_mode},
              {"init_seed", s.init_seed}};
}

nlohmann::json to_json(const ExperimentConfig& c) {
  return json{{"problem", to_json(c.problem)},
              {"optimizer", to_string(c.optimizer)},
              {"label", c.label},
              {"batch_size", c.batch_size},
              {"lr", c.lr},
              {"epochs", c.epochs},
              {"steps", c.steps},
              {"record_every", c.record_every},
              {"solver",
               {{"iterations", c.solver.iterations},
                {"init_samples", c.solver.init_samples},
                {"normalize_probes", c.solver.normalize_probes},
                {"mode", to_string(c.solver.mode)},
                {"rank", c.rank},
                {"beta", c.beta},
                {"rebuild_every", c.rebuild_every},
                {"warmup", c.warmup}}},
              {"seed", c.seed},
              {"record_wall_time", c.record_wall_time},
              {"target_suboptimality", c.target_suboptimality},
              {"target_loss", c.target_loss}};
}

ExperimentConfig config_from_json(const nlohmann::json& doc) {
  ExperimentConfig c;
  Reader r(doc, "config");
  const json* problem = r.object("problem");
  c.problem = problem_from_json(problem ? *problem : json::object());
  std::string optimizer = to_string(c.optimizer);
  r.read("optimizer", optimizer);
  c.optimizer = parse_optimizer(optimizer);
  r.read("label", c.label);
  r.read("batch_size", c.batch_size);
  r.read("lr", c.lr);
  r.read("epochs", c.epochs);
  r.read("steps", c.steps);
  r.read("record_every", c.record_every);
  r.read("seed", c.seed);
  r.read("record_wall_time", c.record_wall_time);
  r.read("target_suboptimality", c.target_suboptimality);
  r.read("target_loss", c.target_loss);
  if (const json* solver = r.object("solver")) {
    Reader s(*solver, "solver");
    s.read("iterations", c.solver.iterations);
    s.read("init_samples", c.solver.init_samples);
    s.read("normalize_probes", c.solver.normalize_probes);
    std::string mode = to_string(c.solver.mode);
    s.read("mode", mode);
    c.solver.mode = parse_estimation_mode(mode);
    s.read("rank", c.rank);
    s.read("beta", c.beta);
    s.read("rebuild_every", c.rebuild_every);
    s.read("warmup", c.warmup);
    s.finish();
  }
  r.finish();
  c.validate();
  return c;
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

nlohmann::json merge_json(nlohmann::json base, const nlohmann::json& patch) {
  if (!patch.is_object() || !base.is_object()) return patch;
  for (const auto& item : patch.items()) {
    auto it = base.find(item.key());
    base[item.key()] = it == base.end() ? item.value() : merge_json(*it, item.value());
  }
  return base;
}

ExperimentConfig load_config(const std::string& path, const nlohmann::json& overrides) {
  json doc = path.empty() ? json::object() : read_json_file(path);
  if (doc.contains("runs")) throw ConfigError("'" + path + "' is a comparison document; use compare");
  return config_from_json(merge_json(std::move(doc), overrides));
}

std::vector<nlohmann::json> expand_runs(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("a comparison document must be a JSON object");
  if (!doc.contains("runs")) return {doc};
  for (const auto& item : doc.items()) {
    if (item.key() != "base" && item.key() != "runs") {
      throw ConfigError("unknown key '" + item.key() + "' in comparison document");
    }
  }
  const json base = doc.value("base", json::object());
  const json& runs = doc.at("runs");
  if (!runs.is_array() || runs.empty()) throw ConfigError("'runs' must be a non-empty array");
  std::vector<json> out;
  for (const auto& run : runs) out.push_back(merge_json(base, run));
  return out;
}

SplitDataset generate_data(const ProblemSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case ProblemKind::regression: {
      RegressionDataSpec d;
      d.n_train = spec.n_train;
      d.n_test = spec.n_test;
      d.input_dim = spec.input_dim;
      d.input_scale_lo = spec.input_scale_lo;
      d.input_scale_hi = spec.input_scale_hi;
      d.noise = spec.noise;
      d.seed = spec.data_seed;
      return generate_regression_data(d);
    }
    case ProblemKind::logistic: {
      LogisticDataSpec d;
      d.n_train = spec.n_train;
      d.n_test = spec.n_test;
      d.input_dim = spec.input_dim;
      d.separation = spec.separation;
      d.seed = spec.data_seed;
      return generate_logistic_data(d);
    }
    case ProblemKind::mlp: {
      ClassificationDataSpec d;
      d.n_train = spec.n_train;
      d.n_test = spec.n_test;
      d.input_dim = spec.input_dim;
      d.classes = spec.classes;
      d.spread = spec.spread;
      d.seed = spec.data_seed;
      return generate_classification_data(d);
    }
  }
  throw ConfigError("unsupported problem kind");
}

std::unique_ptr<Problem> make_problem(const ProblemSpec& spec) {
  spec.validate();
  SplitDataset data;
  if (spec.train_csv.empty()) {
    data = generate_data(spec);
  } else {
    data.train = read_csv(spec.train_csv);
    if (!spec.test_csv.empty()) data.test = read_csv(spec.test_csv);
  }
  try {
    switch (spec.kind) {
      case ProblemKind::regression: {
        const Index d = data.train.input_dim();
        const auto features = FeatureMapSpec::log_uniform(d, spec.feature_scale_lo, spec.feature_scale_hi);
        return make_regression_problem(data, features, spec.regularization);
      }
      case ProblemKind::logistic:
        return make_logistic_problem(data, spec.regularization);
      case ProblemKind::mlp: {
        ToyNet net;
        net.layers.push_back(data.train.input_dim());
        for (Index h : spec.hidden) net.layers.push_back(h);
        net.layers.push_back(spec.classes);
        net.activation = parse_activation(spec.activation);
        net.loss = OutputLoss::cross_entropy;
        net.l2 = spec.regularization;
        return std::make_unique<MlpProblem>(net, std::move(data.train), std::move(data.test), spec.init_seed,
                                            parse_hvp_mode(spec.hvp_mode));
      }
    }
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("invalid problem data: ") + e.what());
  }
  throw ConfigError("unsupported problem kind");
}

}  // namespace probprec
