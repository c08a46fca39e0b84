#include "probprec/serialization.hpp"

#include <fstream>
#include <sstream>

#include "probprec/errors.hpp"

namespace probprec {

using nlohmann::json;

json matrix_to_json(const Matrix& M) {
  json flat = json::array();
  for (Index i = 0; i < M.rows(); ++i) {
    for (Index j = 0; j < M.cols(); ++j) flat.push_back(M(i, j));
  }
  return flat;
}

Matrix matrix_from_json(const json& flat, Index rows, Index cols) {
  if (!flat.is_array() || static_cast<Index>(flat.size()) != rows * cols) {
    std::ostringstream os;
    os << "expected a flat array of " << rows * cols << " numbers";
    throw ConfigError(os.str());
  }
  Matrix M(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) M(i, j) = flat[static_cast<std::size_t>(i * cols + j)].get<double>();
  }
  return M;
}

json to_json(const PriorEstimates& e) {
  return json{{"b0", e.b0}, {"w0", e.w0}, {"lambda0", e.lambda0}};
}

json to_json(const PosteriorMean& p) {
  return json{{"n", p.dimension()},     {"m", p.rank()},         {"b0", p.prior().b0},
              {"w0", p.prior().w0},     {"A", matrix_to_json(p.A())}, {"C", matrix_to_json(p.C())}};
}

json to_json(const Preconditioner& p) {
  return json{{"n", p.dimension()},
              {"k", p.rank()},
              {"alpha", p.alpha()},
              {"beta", p.beta()},
              {"sigma", matrix_to_json(p.spectral().sigma)},
              {"U", matrix_to_json(p.spectral().U)}};
}

PosteriorMean posterior_from_json(const json& doc) {
  try {
    const Index n = doc.at("n").get<Index>();
    const Index m = doc.at("m").get<Index>();
    const MatrixPrior prior{doc.at("b0").get<double>(), doc.at("w0").get<double>(), n};
    return PosteriorMean(prior, matrix_from_json(doc.at("A"), n, m), matrix_from_json(doc.at("C"), n, m));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed posterior: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("malformed posterior: ") + e.what());
  }
}

Preconditioner preconditioner_from_json(const json& doc) {
  try {
    const Index n = doc.at("n").get<Index>();
    const Index k = doc.at("k").get<Index>();
    SpectralApprox s{matrix_from_json(doc.at("U"), n, k), Vector(matrix_from_json(doc.at("sigma"), k, 1))};
    return Preconditioner(std::move(s), doc.at("alpha").get<double>(), doc.at("beta").get<double>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed preconditioner: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("malformed preconditioner: ") + e.what());
  }
}

void save_state(const std::string& path, const SavedState& state) {
  json doc{{"format", "probprec"}, {"version", 1}};
  if (state.estimates) doc["estimates"] = to_json(*state.estimates);
  if (state.posterior) doc["posterior"] = to_json(*state.posterior);
  if (state.preconditioner) doc["preconditioner"] = to_json(*state.preconditioner);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << doc.dump(1) << '\n';
  if (!out) throw ConfigError("failed while writing '" + path + "'");
}

SavedState load_state(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
  if (doc.value("format", "") != "probprec" || doc.value("version", 0) != 1) {
    throw ConfigError("'" + path + "' is not a probprec version 1 file");
  }
  SavedState s;
  if (doc.contains("estimates")) {
    PriorEstimates e;
    e.b0 = doc["estimates"].at("b0").get<double>();
    e.w0 = doc["estimates"].at("w0").get<double>();
    e.lambda0 = doc["estimates"].at("lambda0").get<double>();
    s.estimates = e;
  }
  if (doc.contains("posterior")) s.posterior = posterior_from_json(doc["posterior"]);
  if (doc.contains("preconditioner")) s.preconditioner = preconditioner_from_json(doc["preconditioner"]);
  return s;
}

}  // namespace probprec
