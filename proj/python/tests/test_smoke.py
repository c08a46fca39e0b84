import json

import numpy as np
import pytest

import probprec

SMALL_REGRESSION = {"kind": "regression", "n_train": 800, "n_test": 100, "input_dim": 4}


def test_sym_eig_matches_numpy():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((6, 6))
    m = a + a.T
    values, vectors = probprec.sym_eig(m)
    assert np.all(np.diff(values) <= 0)
    np.testing.assert_allclose(np.sort(values), np.linalg.eigvalsh(m), atol=1e-10)
    np.testing.assert_allclose(m @ vectors, vectors * values, atol=1e-10)


def test_woodbury_solve_matches_dense():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((7, 2))
    rhs = rng.standard_normal(7)
    x = probprec.woodbury_solve(2.0, a, a, rhs)
    np.testing.assert_allclose((2.0 * np.eye(7) + a @ a.T) @ x, rhs, atol=1e-10)


def test_noise_free_posterior_interpolates():
    rng = np.random.default_rng(2)
    s = rng.standard_normal((5, 3))
    y = rng.standard_normal((5, 3))
    post = probprec.infer_noise_free(probprec.MatrixPrior(0.5, 1.0, 5), s, y)
    np.testing.assert_allclose(post.dense() @ s, y, atol=1e-10)
    assert post.rank == 3


def test_noisy_posterior_tends_to_prior_with_large_noise():
    rng = np.random.default_rng(3)
    s = rng.standard_normal((4, 2))
    y = rng.standard_normal((4, 2))
    post = probprec.infer_noisy(probprec.MatrixPrior(1.5, 1.0, 4), 1e12, s, y)
    np.testing.assert_allclose(post.dense(), 1.5 * np.eye(4), atol=1e-8)


def test_exact_preconditioner_flattens_top_eigenvalues():
    rng = np.random.default_rng(4)
    q, _ = np.linalg.qr(rng.standard_normal((8, 8)))
    lam = np.array([100.0, 50.0, 10.0, 5.0, 1.0, 0.5, 0.2, 0.1])
    b = q @ np.diag(lam) @ q.T
    p = probprec.Preconditioner(probprec.SpectralApprox(q[:, :2], lam[:2]), 1.0)
    assert p.alpha ** 2 == pytest.approx(2.0)
    dense = p.dense()
    t = dense.T @ b @ dense / p.alpha ** 2
    expected = np.sort(np.concatenate([[1.0, 1.0], lam[2:]]))
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(t)), expected, rtol=1e-8)
    g = rng.standard_normal(8)
    np.testing.assert_allclose(p.apply_p_squared(g), dense @ dense @ g, atol=1e-10)


def test_problem_oracle_and_inference():
    problem = probprec.make_problem({"problem": SMALL_REGRESSION})
    assert problem.kind == "regression"
    assert problem.dimension == 15
    oracle = problem.make_oracle(64, 5)
    w = problem.initial_point()
    g, hv = oracle.gradient_and_hvp(w, np.ones(problem.dimension))
    assert g.shape == (15,) and hv.shape == (15,)
    assert oracle.data_read == 64
    est = probprec.estimate_parameters(oracle, w, 5)
    assert est.b0 > 0 and est.w0 > 0
    post, s, y, done = probprec.run_inference(oracle, w, est, 6)
    assert done == 6 and s.shape == (15, 6)
    assert oracle.data_read == 64 * (1 + 5 + 6)


def test_construction_cost():
    problem = probprec.make_problem({"problem": SMALL_REGRESSION})
    p, post, est, data_read = probprec.construct_preconditioner(
        problem, {"batch_size": 32, "solver": {"iterations": 8, "init_samples": 3, "rank": 4}}
    )
    assert data_read == (8 + 3) * 32
    assert p.rank == 4


def test_run_is_deterministic_and_returns_csv():
    config = {"problem": SMALL_REGRESSION, "optimizer": "sgd", "lr": 0.005, "steps": 30, "seed": 2}
    a = probprec.run(config)
    b = probprec.run(json.dumps(config))
    assert a["csv"] == b["csv"]
    assert a["csv"].splitlines()[0] == "step,data_read,train_loss,test_loss,test_accuracy,step_length,wall_ms"
    assert a["records"][-1]["step"] == 30
    assert a["records"][0]["test_accuracy"] is None
    assert not a["diverged"]


def test_newton_oracle_matches_exact_solution():
    problem = probprec.make_problem({"problem": SMALL_REGRESSION})
    res = probprec.run({"problem": SMALL_REGRESSION, "optimizer": "newton_oracle"}, problem=problem)
    w_star = problem.exact_solution()
    assert res["records"][0]["train_loss"] == pytest.approx(problem.train_loss(w_star), rel=1e-12)
    np.testing.assert_allclose(problem.full_gradient(w_star), 0.0, atol=1e-9)


def test_compare_and_errors():
    base = {"problem": SMALL_REGRESSION, "steps": 5}
    out = probprec.compare([dict(base, optimizer="sgd"), dict(base, optimizer="newton_oracle")])
    assert [s["optimizer"] for s in out["summary"]] == ["sgd", "newton_oracle"]
    assert out["summary"][1]["data_read_to_target"] == 800
    with pytest.raises(ValueError):
        probprec.compare([])
    with pytest.raises(probprec.ConfigError):
        probprec.run({"problem": SMALL_REGRESSION, "no_such_key": 1})


def test_mlp_reports_accuracy():
    cfg = {"problem": {"kind": "mlp", "n_train": 200, "n_test": 50, "hidden": [8]}, "epochs": 2, "batch_size": 20,
           "lr": 0.1}
    res = probprec.run(cfg)
    acc = res["records"][-1]["test_accuracy"]
    assert acc is not None and 0.0 <= acc <= 1.0
