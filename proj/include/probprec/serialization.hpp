#pragma once

// JSON save format shared by the CLI's `solve` and `precond` commands:
//
//   {"format": "probprec", "version": 1,
//    "estimates":      {"b0", "w0", "lambda0"},
//    "posterior":      {"n", "m", "b0", "w0", "A": [...], "C": [...]},
//    "preconditioner": {"n", "k", "alpha", "beta", "sigma": [...], "U": [...]}}
//
// Matrices are stored row-major as flat arrays. Doubles are written with
// round-trip precision, so loading reproduces the saved values exactly.

#include <optional>
#include <string>

#include <json.hpp>

#include "probprec/active_solver.hpp"
#include "probprec/inference.hpp"
#include "probprec/preconditioner.hpp"

namespace probprec {

nlohmann::json matrix_to_json(const Matrix& M);
Matrix matrix_from_json(const nlohmann::json& flat, Index rows, Index cols);

nlohmann::json to_json(const PriorEstimates& estimates);
nlohmann::json to_json(const PosteriorMean& posterior);
nlohmann::json to_json(const Preconditioner& preconditioner);
PosteriorMean posterior_from_json(const nlohmann::json& doc);
Preconditioner preconditioner_from_json(const nlohmann::json& doc);

struct SavedState {
  std::optional<PriorEstimates> estimates;
  std::optional<PosteriorMean> posterior;
  std::optional<Preconditioner> preconditioner;
};

void save_state(const std::string& path, const SavedState& state);
SavedState load_state(const std::string& path);

}  // namespace probprec
