"""Probabilistic Hessian inference and pre-conditioned SGD.

Config arguments accept either a dict or a JSON string with the same schema as
the command-line tool.
"""

import json as _json

from . import _probprec
from ._probprec import (
    ConfigError,
    MatrixPrior,
    NumericalError,
    PosteriorMean,
    Preconditioner,
    PriorEstimates,
    SpectralApprox,
    estimate_parameters,
    generalized_sym_eig,
    infer_noise_free,
    infer_noisy,
    reduce_rank,
    run_inference,
    sym_eig,
    woodbury_solve,
)

__all__ = [
    "ConfigError",
    "MatrixPrior",
    "NumericalError",
    "PosteriorMean",
    "Preconditioner",
    "PriorEstimates",
    "SpectralApprox",
    "compare",
    "construct_preconditioner",
    "estimate_parameters",
    "generalized_sym_eig",
    "infer_noise_free",
    "infer_noisy",
    "make_problem",
    "reduce_rank",
    "run",
    "run_inference",
    "sym_eig",
    "woodbury_solve",
]


def _as_json(config):
    return config if isinstance(config, str) else _json.dumps(config)


def make_problem(config):
    """Builds the problem described by a config (only its "problem" part is used)."""
    return _probprec.make_problem(_as_json(config))


def construct_preconditioner(problem, config=None):
    """Returns (preconditioner, posterior, estimates, data_read) at the initial point."""
    return _probprec.construct_preconditioner(problem, _as_json(config or {}))


def run(config, problem=None):
    """Runs one optimizer. Returns a dict with records, csv, final_w and flags."""
    if problem is None:
        return _probprec.run(_as_json(config))
    return _probprec.run_on(problem, _as_json(config))


def compare(configs):
    """Runs several configs on one shared problem."""
    return _probprec.compare([_as_json(c) for c in configs])
