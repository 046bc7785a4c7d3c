import numpy as np
import pytest

from conftest import central_diff, rel_err
from iceo.oracle import OracleConfig, solve_batch
from iceo.problems import NewsvendorProblem
from iceo.simplex import enumerate_grid, sample_simplex_uniform, tangent_basis
from iceo.surrogates import (ConstantSurrogate, ExactOracle, TrainingDivergence, bernstein_eval,
                             bernstein_fit, fit_surrogate, generate_surrogate_samples, krr_eval,
                             krr_fit, mape, mlp_eval, mlp_fit)
from iceo.surrogates.bernstein import multinomial_coefficients, monomials
from iceo.surrogates.mlp import init_mlp

CFG = OracleConfig(0.01)


@pytest.fixture(scope="module")
def nv():
    from iceo.problems import default_newsvendor

    return default_newsvendor()


@pytest.fixture(scope="module")
def mlp_model(nv):
    S = generate_surrogate_samples(nv, CFG, 4000, 0.0, 0)
    return mlp_fit(S.P, S.W, 64, 300, 1e-2, 0)


def test_samples_noiseless_are_feasible(nv):
    S = generate_surrogate_samples(nv, CFG, 200, 0.0, 1)
    assert np.all(nv.region.member_mask(S.W, 1e-6))


def test_samples_noise_is_zero_mean(nv):
    S = generate_surrogate_samples(nv, CFG, 10_000, 0.5, 2)
    resid = S.W - solve_batch(nv, S.P, CFG)
    assert np.all(np.abs(resid.mean(axis=0)) < 0.02)


def test_samples_deterministic(nv):
    a, b = (generate_surrogate_samples(nv, CFG, 50, 0.3, 3) for _ in range(2))
    assert np.array_equal(a.P, b.P) and np.array_equal(a.W, b.W)


def test_partition_of_unity():
    P = sample_simplex_uniform(4, 100, 0)
    for s in (1, 3, 8, 12):
        g = enumerate_grid(4, s)
        total = (monomials(P, g.alphas) * multinomial_coefficients(g.alphas)).sum(axis=1)
        assert np.allclose(total, 1.0, atol=1e-10)


def test_bernstein_s1_k2_is_linear_interpolation():
    prob = NewsvendorProblem([(10.0, 5.0), (20.0, 30.0)], 1.0, 5.0, 50.0)
    m = bernstein_fit(prob, CFG, 1)
    w_vert = solve_batch(prob, np.eye(2), CFG)
    for t in (0.0, 0.3, 1.0):
        p = np.array([t, 1 - t])
        assert np.allclose(bernstein_eval(m, p)[0], t * w_vert[0] + (1 - t) * w_vert[1])


def test_bernstein_vertices_exact(nv):
    m = bernstein_fit(nv, CFG, 6)
    assert np.allclose(m.predict(np.eye(4)), solve_batch(nv, np.eye(4), CFG), atol=1e-12)


def test_bernstein_reproduces_constants(nv):
    m = bernstein_fit(nv, CFG, 5)
    m.coefficients[:] = np.array([3.0, -2.0])
    assert np.allclose(m.predict(sample_simplex_uniform(4, 50, 1)), [3.0, -2.0], atol=1e-10)


def test_bernstein_grid_limit(nv):
    with pytest.raises(ValueError):
        bernstein_fit(nv, CFG, 200)


def _fd_jacobian_check(model, P, tol):
    T = tangent_basis(model.K)
    for p in P:
        J = model.jacobian(p[None])[0]
        fd = central_diff(lambda q: model.predict(q[None])[0], p, h=1e-5)
        assert rel_err(J, fd) < tol
        # tangent directions, as used when p moves inside the simplex
        fd_t = central_diff(lambda u: model.predict((p + T @ u)[None])[0], np.zeros(model.K - 1), h=1e-5)
        assert rel_err(J @ T, fd_t) < tol


def test_bernstein_jacobian_fd(nv):
    _fd_jacobian_check(bernstein_fit(nv, CFG, 8), sample_simplex_uniform(4, 10, 2), 1e-5)


def test_bernstein_envelope_with_fitted_constant(nv):
    P = sample_simplex_uniform(4, 500, 3)
    W = solve_batch(nv, P, CFG)
    L = nv.lipschitz_estimate(seed=0)
    err = {s: np.max(np.abs(bernstein_fit(nv, CFG, s).predict(P) - W)) for s in (4, 8, 16)}
    omega = max(err[s] * CFG.rho * np.sqrt(s) / L for s in (4, 16))
    assert err[8] <= omega * L / (CFG.rho * np.sqrt(8))
    assert err[8] <= 1.05 * err[4] and err[16] <= 1.05 * err[8]


def test_krr_degree1_linear():
    rng = np.random.default_rng(0)
    P = sample_simplex_uniform(3, 30, rng)
    W = rng.normal(size=(30, 2))
    m = krr_fit(P, W, degree=1, offset=0.0, ridge=1e-3)
    J = m.jacobian(sample_simplex_uniform(3, 5, 1))
    assert np.allclose(J, J[0])


def test_krr_constant_targets():
    P = sample_simplex_uniform(4, 100, 4)
    m = krr_fit(P, np.full((100, 2), 7.0), degree=3, ridge=1e-9)
    assert np.allclose(m.predict(P), 7.0, atol=1e-3)


def test_krr_large_ridge_shrinks_to_zero():
    P = np.repeat(sample_simplex_uniform(4, 5, 5), 4, axis=0)
    W = np.ones((20, 1)) * 5.0
    assert np.all(np.abs(krr_fit(P, W, ridge=1e8).predict(P)) < 1e-4)


def test_krr_interpolation_limit(nv):
    # cubics restricted to the simplex span C(6, 3) = 20 dimensions; 15 points can be interpolated
    S = generate_surrogate_samples(nv, CFG, 15, 0.0, 6)
    m = krr_fit(S.P, S.W, degree=3, ridge=1e-12)
    assert np.max(np.abs(m.predict(S.P) - S.W)) < 1e-3


def test_krr_jacobian_fd(nv):
    S = generate_surrogate_samples(nv, CFG, 300, 0.25, 7)
    _fd_jacobian_check(krr_fit(S.P, S.W, 3, 1.0, 1e-4), sample_simplex_uniform(4, 10, 8), 1e-5)


def test_krr_in_sample_vs_out_of_sample(nv):
    S = generate_surrogate_samples(nv, CFG, 2000, 0.0, 9)
    m = krr_fit(S.P, S.W, 3, 1.0, 1e-6)
    rmse_in = np.sqrt(np.mean((m.predict(S.P) - S.W) ** 2))
    P = sample_simplex_uniform(4, 500, 10)
    rmse_out = np.sqrt(np.mean((m.predict(P) - solve_batch(nv, P, CFG)) ** 2))
    assert rmse_in <= rmse_out + 0.5


def test_krr_rejects_bad_ridge():
    with pytest.raises(ValueError):
        krr_fit(np.eye(3), np.ones((3, 1)), ridge=0.0)


def test_krr_eval_pair(nv):
    S = generate_surrogate_samples(nv, CFG, 50, 0.0, 11)
    m = krr_fit(S.P, S.W)
    w, J = krr_eval(m, S.P[0])
    assert w.shape == (2,) and J.shape == (2, 4)


def test_mlp_heldout_mape(nv, mlp_model):
    P = sample_simplex_uniform(4, 500, 12)
    assert mape(mlp_model.predict(P), solve_batch(nv, P, CFG)) <= 0.10


def test_mlp_jacobian_fd(mlp_model):
    _fd_jacobian_check(mlp_model, sample_simplex_uniform(4, 10, 13), 1e-4)


def test_mlp_lipschitz_bound(mlp_model):
    rng = np.random.default_rng(14)
    P, Q = sample_simplex_uniform(4, 200, rng), sample_simplex_uniform(4, 200, rng)
    lhs = np.linalg.norm(mlp_model.predict(P) - mlp_model.predict(Q), axis=1)
    assert np.all(lhs <= mlp_model.lipschitz_bound() * np.linalg.norm(P - Q, axis=1) + 1e-12)


def test_mlp_zero_weights_constant():
    m = init_mlp(4, 2, 8, np.random.default_rng(0), out_bias=[1.5, -0.5])
    for k in ("W1", "b1", "W2"):
        m.params[k][:] = 0.0
    assert np.allclose(m.predict(sample_simplex_uniform(4, 5, 0)), [1.5, -0.5])
    assert np.allclose(mlp_eval(m, np.full(4, 0.25))[1], 0.0)


def test_mlp_identical_samples_reach_constant_floor():
    P = np.tile([0.1, 0.2, 0.3, 0.4], (64, 1))
    W = np.tile([10.0, 20.0], (64, 1))
    m = mlp_fit(P, W, 8, 200, 1e-2, 0)
    # a constant predictor fits identical targets exactly, so the loss floor is zero
    assert m.meta["trace"][-1] < 5e-3


def test_mlp_deterministic():
    P = sample_simplex_uniform(4, 100, 1)
    W = P @ np.arange(8.0).reshape(4, 2) + 1
    a, b = mlp_fit(P, W, 8, 5, 1e-2, 3), mlp_fit(P, W, 8, 5, 1e-2, 3)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


def test_mlp_divergence_raises():
    P = sample_simplex_uniform(4, 20, 1)
    W = np.full((20, 1), np.nan)
    with pytest.raises(TrainingDivergence) as exc:
        mlp_fit(P, W, 4, 3, 1e-2, 0)
    assert exc.value.epoch == 0


def test_constant_surrogate_and_exact_oracle(nv):
    c = ConstantSurrogate([1.0, 2.0], 4)
    assert np.allclose(c.jacobian(np.eye(4)), 0.0)
    ex = ExactOracle(nv, CFG)
    assert np.allclose(ex.predict(np.eye(4)), solve_batch(nv, np.eye(4), CFG))
    with pytest.raises(NotImplementedError):
        ex.jacobian(np.eye(4))


def test_fit_surrogate_metadata(nv):
    m = fit_surrogate(nv, CFG, {"kind": "krr", "m": 100}, seed=4)
    assert m.meta["kind"] == "krr" and m.meta["rho"] == 0.01 and m.meta["K"] == 4 and m.meta["d"] == 2
    with pytest.raises(ValueError):
        fit_surrogate(nv, CFG, {"kind": "spline"})
