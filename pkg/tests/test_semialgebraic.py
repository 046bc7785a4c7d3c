import numpy as np
import pytest
from scipy.optimize import linprog

from iceo.datagen import Dataset
from iceo.oracle import OracleConfig
from iceo.semialgebraic import (Certificate, DomainError, PolyhedralDomain, build_membership_system,
                                check_feasibility, evaluate_polynomial, export_polynomial_program,
                                falsify_by_sampling, hit_and_run, membership_violation,
                                parse_polynomial_program, random_certified_instance, surrogate_monomials)
from iceo.simplex import sample_simplex_uniform
from iceo.surrogates import bernstein_fit, generate_surrogate_samples, krr_fit, mlp_fit


def unit_interval():
    return PolyhedralDomain(np.array([[1.0], [-1.0]]), np.array([0.0, -1.0]))


def test_variable_count_for_interval():
    system = build_membership_system(unit_interval(), 2)
    assert system.n_aux == 8
    assert system.blocks() == ["y1", "y2", "z", "u"]


def test_constant_uniform_hypothesis_certified():
    dom = PolyhedralDomain.box(-np.ones(3), np.ones(3))
    assert check_feasibility(build_membership_system(dom, 4)) is Certificate.CERTIFIED


def test_interval_examples():
    dom = unit_interval()
    system = build_membership_system(dom, 2)
    # x -> (x, 1 - x) maps [0, 1] onto the simplex exactly
    assert check_feasibility(system, [[1.0], [-1.0]], [0.0, 1.0]) is Certificate.CERTIFIED
    # x -> (2x, 1 - 2x) leaves it for x > 1/2
    assert check_feasibility(system, [[2.0], [-2.0]], [0.0, 1.0]) is Certificate.INFEASIBLE
    # rows do not sum to one
    assert check_feasibility(system, [[0.0], [0.0]], [0.5, 0.6]) is Certificate.INFEASIBLE


def test_row_permutation_invariance():
    rng = np.random.default_rng(0)
    dom = PolyhedralDomain.box(-np.ones(2), 2 * np.ones(2))
    perm = PolyhedralDomain(dom.A[::-1].copy(), dom.a[::-1].copy())
    for margin in (0.5, 1.0, 1.5):
        B, b = random_certified_instance(dom, 3, rng, margin)
        assert check_feasibility(build_membership_system(dom, 3), B, b) is \
            check_feasibility(build_membership_system(perm, 3), B, b)


@pytest.mark.parametrize("seed", range(5))
def test_soundness_on_random_instances(seed):
    rng = np.random.default_rng(seed)
    lo = rng.uniform(-2, 0, 3)
    dom = PolyhedralDomain.box(lo, lo + rng.uniform(0.5, 3, 3))
    B, b = random_certified_instance(dom, 4, rng, margin=0.95)
    assert check_feasibility(build_membership_system(dom, 4), B, b) is Certificate.CERTIFIED
    X = hit_and_run(dom, 3000, seed)
    assert all(dom.contains(x, 1e-9) for x in X[:200])
    assert max(membership_violation(x, B, b) for x in X) < 1e-9
    # vertices are the worst case for linear maps on a box
    V = np.array(np.meshgrid(*zip(dom.lower, dom.upper))).reshape(3, -1).T
    assert (V @ B.T + b).min() >= -1e-9


@pytest.mark.parametrize("seed", range(3))
def test_violators_rejected_and_falsified(seed):
    rng = np.random.default_rng(100 + seed)
    dom = PolyhedralDomain.box(-np.ones(3), np.ones(3))
    B, b = random_certified_instance(dom, 4, rng, margin=1.0)
    B = 10 * B
    assert check_feasibility(build_membership_system(dom, 4), B, b) is Certificate.INFEASIBLE
    assert falsify_by_sampling(dom, B, b, 10_000, seed) is not None


def test_sampler_deterministic():
    dom = PolyhedralDomain.box(np.zeros(2), np.ones(2))
    assert np.array_equal(hit_and_run(dom, 50, 3), hit_and_run(dom, 50, 3))


def test_domain_errors():
    with pytest.raises(DomainError):
        PolyhedralDomain(np.array([[1.0, 0.0]]), np.array([0.0]))  # half-plane
    with pytest.raises(DomainError):
        PolyhedralDomain(np.array([[1.0], [-1.0]]), np.array([1.0, 0.0]))  # x >= 1, x <= 0
    flat = PolyhedralDomain(np.array([[1.0], [-1.0]]), np.array([0.5, -0.5]))
    with pytest.raises(DomainError):
        hit_and_run(flat, 5, 0)
    with pytest.raises(ValueError):
        build_membership_system(unit_interval(), 2, B=np.zeros((3, 1)))


def _check_export(problem, sur, rho):
    rng = np.random.default_rng(0)
    dom = PolyhedralDomain.box(-np.ones(3), np.ones(3))
    data = Dataset(hit_and_run(dom, 6, 1), rng.integers(0, 4, 6))
    text = export_polynomial_program(data, problem, sur, dom, rho)
    prog = parse_polynomial_program(text)
    B, b = random_certified_instance(dom, 4, rng, 0.8)
    system = build_membership_system(dom, 4, B, b)
    mult = linprog(np.zeros(system.n_aux), A_ub=system.A_ub, b_ub=system.b_ub, A_eq=system.A_eq,
                   b_eq=system.b_eq, bounds=(0, None), method="highs").x
    vals = {f"B_{k}_{j}": B[k, j] for k in range(4) for j in range(3)}
    vals.update({f"b_{k}": b[k] for k in range(4)})
    P = data.X @ B.T + b
    W = sur.predict(P)
    Z = problem.scenarios.values[data.labels]
    T = np.maximum(problem.h * (W - Z), problem.b * (Z - W))
    for i in range(len(data)):
        vals.update({f"p_{i}_{k}": P[i, k] for k in range(4)})
        vals.update({f"w_{i}_{j}": W[i, j] for j in range(2)})
        vals.update({f"t_{i}_{j}": T[i, j] for j in range(2)})
    for bi, blk in enumerate(["y0", "y1", "y2", "y3", "z", "u"]):
        vals.update({f"{blk}_{r}": mult[bi * dom.m + r] for r in range(dom.m)})
    assert set(prog["variables"]) == set(vals)
    for name, sense, terms in prog["constraints"]:
        v = evaluate_polynomial(terms, vals)
        if sense == "EQ":
            assert abs(v) < 1e-7, name
        else:
            assert v > -1e-7, name
    ref = np.mean(T.sum(axis=1) + 0.5 * rho * np.sum(W**2, axis=1))
    assert evaluate_polynomial(prog["objective"], vals) == pytest.approx(ref, rel=1e-10)


def test_export_round_trip_bernstein(newsvendor):
    _check_export(newsvendor, bernstein_fit(newsvendor, OracleConfig(0.01), 3), 0.01)


def test_export_round_trip_krr(newsvendor):
    S = generate_surrogate_samples(newsvendor, OracleConfig(0.01), 200, 0.0, 0)
    _check_export(newsvendor, krr_fit(S.P, S.W, 2, 1.0, 1e-4), 0.01)


def test_monomials_reproduce_predictions(newsvendor):
    S = generate_surrogate_samples(newsvendor, OracleConfig(0.01), 100, 0.0, 0)
    P = sample_simplex_uniform(4, 20, 1)
    for sur in (bernstein_fit(newsvendor, OracleConfig(0.01), 4), krr_fit(S.P, S.W, 3, 1.0, 1e-4)):
        mono = surrogate_monomials(sur)
        pred = np.array([sum(c * np.prod(p ** e) for c, e in mono) for p in P])
        assert np.allclose(pred, sur.predict(P), atol=1e-8)


def test_mlp_and_non_newsvendor_rejected(newsvendor, flow):
    S = generate_surrogate_samples(newsvendor, OracleConfig(0.01), 50, 0.0, 0)
    dom = PolyhedralDomain.box(-np.ones(3), np.ones(3))
    data = Dataset(np.zeros((2, 3)), np.array([0, 1]))
    with pytest.raises(TypeError):
        export_polynomial_program(data, newsvendor, mlp_fit(S.P, S.W, 4, 1, 1e-2, 0), dom, 0.01)
    with pytest.raises(TypeError):
        export_polynomial_program(data, flow, bernstein_fit(flow, OracleConfig(0.01), 2), dom, 0.01)
    with pytest.raises(ValueError):
        parse_polynomial_program("something else\n")
