#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "probprec/active_solver.hpp"
#include "probprec/config.hpp"
#include "probprec/errors.hpp"
#include "probprec/harness.hpp"
#include "probprec/inference.hpp"
#include "probprec/linalg.hpp"
#include "probprec/preconditioner.hpp"
#include "probprec/problems.hpp"
#include "probprec/serialization.hpp"

namespace py = pybind11;
using namespace probprec;

namespace {

// Config arguments arrive as JSON text so that Python callers can pass
// json.dumps(dict) without a parallel schema.
ExperimentConfig parse_config(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(doc);
}

py::dict record_to_dict(const RunRecord& r) {
  py::dict d;
  d["step"] = r.step;
  d["data_read"] = r.data_read;
  d["train_loss"] = r.train_loss;
  d["test_loss"] = r.test_loss;
  d["test_accuracy"] = r.test_accuracy ? py::cast(*r.test_accuracy) : py::none();
  d["step_length"] = r.step_length;
  d["wall_ms"] = r.wall_ms;
  return d;
}

py::dict result_to_dict(const RunResult& r) {
  py::list records;
  for (const auto& rec : r.records) records.append(record_to_dict(rec));
  std::ostringstream csv;
  write_run_csv(csv, r.records);
  py::dict d;
  d["label"] = r.label;
  d["optimizer"] = to_string(r.optimizer);
  d["records"] = records;
  d["csv"] = csv.str();
  d["final_w"] = r.final_w;
  d["diverged"] = r.diverged;
  d["fell_back"] = r.fell_back;
  d["construction_data_read"] = r.construction_data_read;
  return d;
}

}  // namespace

PYBIND11_MODULE(_probprec, m) {
  m.doc() = "Probabilistic Hessian inference and pre-conditioned SGD";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  auto numerical = py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  (void)numerical;

  // Linear algebra.
  m.def(
      "sym_eig",
      [](const Matrix& M) {
        auto r = sym_eig(M);
        return py::make_tuple(r.values, r.vectors);
      },
      py::arg("matrix"), "Eigenvalues (descending) and eigenvectors of a symmetric matrix.");
  m.def(
      "generalized_sym_eig",
      [](const Matrix& G, const Matrix& R) {
        auto r = generalized_sym_eig(G, R);
        return py::make_tuple(r.values, r.vectors);
      },
      py::arg("G"), py::arg("R"), "Solves G v = lambda R v with V^T R V = I.");
  m.def(
      "woodbury_solve",
      [](double b0, const Matrix& A, const Matrix& C, const Vector& rhs) {
        return woodbury_solve(b0, LowRankFactors{A, C}, rhs);
      },
      py::arg("b0"), py::arg("A"), py::arg("C"), py::arg("rhs"), "Solves (b0 I + A C^T) x = rhs.");

  // Inference.
  py::class_<MatrixPrior>(m, "MatrixPrior")
      .def(py::init([](double b0, double w0, Index n) { return MatrixPrior{b0, w0, n}; }), py::arg("b0"),
           py::arg("w0"), py::arg("n"))
      .def_readwrite("b0", &MatrixPrior::b0)
      .def_readwrite("w0", &MatrixPrior::w0)
      .def_readwrite("n", &MatrixPrior::n);

  py::class_<PosteriorMean>(m, "PosteriorMean")
      .def(py::init<const MatrixPrior&>(), py::arg("prior"))
      .def_property_readonly("A", &PosteriorMean::A)
      .def_property_readonly("C", &PosteriorMean::C)
      .def_property_readonly("prior", &PosteriorMean::prior)
      .def_property_readonly("dimension", &PosteriorMean::dimension)
      .def_property_readonly("rank", &PosteriorMean::rank)
      .def("apply", &PosteriorMean::apply, py::arg("v"))
      .def("solve", &PosteriorMean::solve, py::arg("v"))
      .def("dense", &PosteriorMean::dense);

  m.def("infer_noise_free", &infer_noise_free, py::arg("prior"), py::arg("S"), py::arg("Y"));
  m.def(
      "infer_noisy",
      [](const MatrixPrior& prior, double lambda0, const Matrix& S, const Matrix& Y) {
        const NoiseModel noise{lambda0};
        return infer_noisy(prior, noise, ObservationSet::make(S, Y, noise));
      },
      py::arg("prior"), py::arg("lambda0"), py::arg("S"), py::arg("Y"));

  py::class_<PriorEstimates>(m, "PriorEstimates")
      .def_readonly("b0", &PriorEstimates::b0)
      .def_readonly("w0", &PriorEstimates::w0)
      .def_readonly("lambda0", &PriorEstimates::lambda0)
      .def_readonly("mean_gradient", &PriorEstimates::mean_gradient);

  // Pre-conditioner.
  py::class_<SpectralApprox>(m, "SpectralApprox")
      .def(py::init([](Matrix U, Vector sigma) { return SpectralApprox{std::move(U), std::move(sigma)}; }),
           py::arg("U"), py::arg("sigma"))
      .def_readonly("U", &SpectralApprox::U)
      .def_readonly("sigma", &SpectralApprox::sigma)
      .def_property_readonly("rank", &SpectralApprox::rank);
  m.def("reduce_rank", &reduce_rank, py::arg("posterior"), py::arg("k"));

  py::class_<Preconditioner>(m, "Preconditioner")
      .def(py::init([](const SpectralApprox& s, double beta) {
             return build_preconditioner(s, beta, 1.0).preconditioner;
           }),
           py::arg("spectral"), py::arg("beta") = 1.0)
      .def_property_readonly("alpha", &Preconditioner::alpha)
      .def_property_readonly("beta", &Preconditioner::beta)
      .def_property_readonly("rank", &Preconditioner::rank)
      .def_property_readonly("spectral", &Preconditioner::spectral)
      .def("apply_p_squared", [](const Preconditioner& p, const Vector& g) { return p.apply_p_squared(g); },
           py::arg("g"))
      .def("dense", &Preconditioner::dense);

  // Problems and oracles.
  py::class_<Problem>(m, "Problem")
      .def_property_readonly("kind", &Problem::kind)
      .def_property_readonly("dimension", &Problem::dimension)
      .def_property_readonly("num_train", &Problem::num_train)
      .def("train_loss", &Problem::train_loss, py::arg("w"))
      .def("test_loss", &Problem::test_loss, py::arg("w"))
      .def("test_accuracy", &Problem::test_accuracy, py::arg("w"))
      .def("full_gradient", &Problem::full_gradient, py::arg("w"))
      .def("initial_point", &Problem::initial_point)
      .def("make_oracle", &Problem::make_oracle, py::arg("batch_size"), py::arg("seed") = 0, py::keep_alive<0, 1>())
      .def("exact_solution", [](const Problem& p) {
        const auto* q = dynamic_cast<const QuadraticProblem*>(&p);
        if (!q) throw ConfigError("exact_solution is only defined for the regression problem");
        return exact_solution(*q);
      });

  py::class_<HessianOracle>(m, "HessianOracle")
      .def_property_readonly("dimension", &HessianOracle::dimension)
      .def_property_readonly("batch_size", &HessianOracle::batch_size)
      .def_property_readonly("data_read", &HessianOracle::data_read)
      .def("noisy_gradient", &HessianOracle::noisy_gradient, py::arg("w"))
      .def("noisy_hvp", &HessianOracle::noisy_hvp, py::arg("w"), py::arg("s"))
      .def(
          "gradient_and_hvp",
          [](HessianOracle& o, const Vector& w, const Vector& s) {
            const Batch b = o.draw_batch();
            return py::make_tuple(o.gradient(w, b), o.hvp(w, s, b));
          },
          py::arg("w"), py::arg("s"), "Gradient and Hessian-vector product on one shared batch.");

  m.def(
      "make_problem", [](const std::string& config_json) { return make_problem(parse_config(config_json).problem); },
      py::arg("config_json"), "Builds the problem described by a JSON config document.");

  m.def(
      "estimate_parameters",
      [](HessianOracle& oracle, const Vector& w, int init_samples, const std::string& mode) {
        return estimate_parameters(oracle, w, init_samples, parse_estimation_mode(mode));
      },
      py::arg("oracle"), py::arg("w"), py::arg("init_samples") = 5, py::arg("mode") = "full");
  m.def(
      "run_inference",
      [](HessianOracle& oracle, const Vector& w, const PriorEstimates& est, int iterations) {
        SolverConfig config;
        config.iterations = iterations;
        auto r = run_inference(oracle, w, est, config);
        return py::make_tuple(r.posterior, r.observations.S, r.observations.Y, r.completed_iterations);
      },
      py::arg("oracle"), py::arg("w"), py::arg("estimates"), py::arg("iterations") = 16,
      "Returns (posterior, S, Y, completed_iterations).");
  m.def(
      "construct_preconditioner",
      [](const Problem& problem, const std::string& config_json) {
        const auto config = parse_config(config_json);
        auto oracle = problem.make_oracle(config.batch_size, config.seed);
        auto c = construct_preconditioner(*oracle, problem.initial_point(), config);
        return py::make_tuple(c.built.preconditioner, c.inference.posterior, c.estimates, c.data_read);
      },
      py::arg("problem"), py::arg("config_json"),
      "Returns (preconditioner, posterior, estimates, data_read) built at the initial point.");

  // Harness.
  m.def(
      "run",
      [](const std::string& config_json) {
        const auto config = parse_config(config_json);
        const auto problem = make_problem(config.problem);
        return result_to_dict(run_experiment(*problem, config));
      },
      py::arg("config_json"), "Runs one optimizer; returns records, CSV text and the final iterate.");
  m.def(
      "run_on",
      [](const Problem& problem, const std::string& config_json) {
        return result_to_dict(run_experiment(problem, parse_config(config_json)));
      },
      py::arg("problem"), py::arg("config_json"), "Runs one optimizer on an existing problem.");
  m.def(
      "compare",
      [](const std::vector<std::string>& configs) {
        std::vector<ExperimentConfig> parsed;
        for (const auto& c : configs) parsed.push_back(parse_config(c));
        const Comparison cmp = compare(parsed);
        py::list runs;
        for (const auto& r : cmp.runs) runs.append(result_to_dict(r));
        py::list summary;
        for (const auto& s : cmp.summary) {
          py::dict d;
          d["label"] = s.label;
          d["optimizer"] = to_string(s.optimizer);
          d["final_train_loss"] = s.final_train_loss;
          d["best_train_loss"] = s.best_train_loss;
          d["final_data_read"] = s.final_data_read;
          d["data_read_to_target"] = s.data_read_to_target ? py::cast(*s.data_read_to_target) : py::none();
          d["diverged"] = s.diverged;
          summary.append(d);
        }
        py::dict out;
        out["runs"] = runs;
        out["summary"] = summary;
        out["target_loss"] = cmp.target_loss ? py::cast(*cmp.target_loss) : py::none();
        return out;
      },
      py::arg("configs_json"), "Runs several configs on one shared problem.");
}
