import numpy as np
import pytest
import scipy.linalg as sl
from numpy.testing import assert_allclose

from tworay_pm.admm import AdmmOptions, FeasibleSetProjector, GroupBallAdmm, group_shrink
from tworay_pm.errors import ConvergenceError, InfeasibleError


def small_problem(random_complex, n=10, m=2, k=8, r=2, slack=1.2):
    B, C = random_complex(k, n), random_complex(r, n)
    W_feasible = random_complex(n, m)
    Bt = B @ W_feasible + 0.5 * random_complex(k, m)
    Ct = C @ W_feasible
    radius = slack * np.linalg.norm(B @ W_feasible - Bt)
    return B, Bt, C, Ct, radius, W_feasible


def test_group_shrink():
    X = np.array([[3.0, 4.0], [0.3, 0.4], [0.0, 0.0]], dtype=complex)
    out = group_shrink(X, np.array([1.0, 1.0, 1.0]))
    assert_allclose(out[0], [2.4, 3.2])
    assert np.all(out[1:] == 0)


def test_projection_lands_in_the_feasible_set(random_complex):
    B, Bt, C, Ct, radius, W0 = small_problem(random_complex)
    projector = FeasibleSetProjector(B, Bt, C, Ct, radius)
    for scale in (0.1, 1.0, 100.0):
        W, lam = projector.project(scale * random_complex(*W0.shape))
        assert lam >= 0.0
        assert np.max(np.abs(C @ W - Ct)) <= 1e-9 * max(1.0, np.abs(Ct).max())
        assert np.linalg.norm(B @ W - Bt) <= radius * (1 + 1e-9)


def test_projection_is_the_nearest_feasible_point(random_complex):
    B, Bt, C, Ct, radius, W0 = small_problem(random_complex)
    projector = FeasibleSetProjector(B, Bt, C, Ct, radius)
    V = 10.0 * random_complex(*W0.shape)
    P, lam = projector.project(V)
    assert lam > 0.0
    assert_allclose(np.linalg.norm(B @ P - Bt), radius, rtol=1e-9)
    # obtuse angle with every other feasible point
    for _ in range(20):
        X, _ = projector.project(random_complex(*W0.shape))
        assert np.real(np.vdot(V - P, X - P)) <= 1e-8 * np.linalg.norm(V) * np.linalg.norm(X - P)
    # feasible points are left where they are
    X, lam = projector.project(W0)
    assert lam == 0.0
    assert_allclose(X, W0, atol=1e-10)


def test_projector_floor_is_the_least_reachable_mismatch(random_complex):
    B, Bt, C, Ct, radius, _ = small_problem(random_complex, n=6, k=8, r=2)
    w0 = sl.lstsq(C, Ct)[0]
    basis = sl.null_space(C)
    z = sl.lstsq(B @ basis, Bt - B @ w0)[0]
    least = np.linalg.norm(B @ (w0 + basis @ z) - Bt)
    assert least > 0.0
    assert_allclose(FeasibleSetProjector(B, Bt, C, Ct, radius).floor, least, rtol=1e-9)
    tight = FeasibleSetProjector(B, Bt, C, Ct, 0.5 * least)
    assert not tight.feasible
    with pytest.raises(InfeasibleError):
        tight.project(np.zeros((6, 2), dtype=complex))


def test_single_antenna_equality_forces_the_value():
    one = np.array([[1.0 + 0j]])
    solver = GroupBallAdmm(one, np.array([[0.1 + 0j]]), one, one, radius=1.0)
    result = solver.solve(np.ones(1), AdmmOptions(), solver.initial_state(np.zeros((1, 1), dtype=complex), 1.0))
    assert result.converged
    assert_allclose(result.W, [[1.0]], atol=1e-8)
    assert_allclose(np.linalg.norm(result.W), 1.0, atol=1e-8)


def test_solution_is_feasible_and_certified(random_complex):
    B, Bt, C, Ct, radius, W0 = small_problem(random_complex)
    solver = GroupBallAdmm(B, Bt, C, Ct, radius)
    delta = np.ones(B.shape[1])
    result = solver.solve(delta, AdmmOptions(), solver.initial_state(W0, 1.0))

    assert result.converged
    assert np.max(np.abs(C @ result.W - Ct)) <= 1e-9
    assert np.linalg.norm(B @ result.W - Bt) <= radius * (1 + 1e-9)
    objective = delta @ np.linalg.norm(result.W, axis=1)
    assert_allclose(result.objective, objective, rtol=1e-12)
    assert result.dual_bound <= objective + 1e-9
    assert result.relative_gap <= 1e-6


def test_feasible_perturbations_do_not_improve(random_complex, rng):
    B, Bt, C, Ct, radius, W0 = small_problem(random_complex)
    solver = GroupBallAdmm(B, Bt, C, Ct, radius)
    delta = np.ones(B.shape[1])
    result = solver.solve(delta, AdmmOptions(), solver.initial_state(W0, 1.0))
    W = result.W
    objective = delta @ np.linalg.norm(W, axis=1)
    basis = sl.null_space(C)

    accepted = 0
    for _ in range(2000):
        step = basis @ (rng.standard_normal((basis.shape[1], W.shape[1]))
                        + 1j * rng.standard_normal((basis.shape[1], W.shape[1])))
        candidate = W + 1e-3 * step
        if np.linalg.norm(B @ candidate - Bt) > radius:
            continue
        accepted += 1
        assert objective <= delta @ np.linalg.norm(candidate, axis=1) + 1e-5
        if accepted == 20:
            break
    assert accepted == 20


def test_weighted_groups_prefer_cheap_antennas(random_complex):
    B, Bt, C, Ct, radius, W0 = small_problem(random_complex, slack=3.0)
    solver = GroupBallAdmm(B, Bt, C, Ct, radius)
    delta = np.ones(B.shape[1])
    delta[:5] = 100.0
    result = solver.solve(delta, AdmmOptions(), solver.initial_state(W0, 1.0))
    norms = np.linalg.norm(result.W, axis=1)
    assert norms[:5].sum() < norms[5:].sum()
    assert result.relative_gap <= 1e-6


def test_non_convergence_carries_the_trace(random_complex):
    B, Bt, C, Ct, radius, W0 = small_problem(random_complex)
    solver = GroupBallAdmm(B, Bt, C, Ct, radius)
    with pytest.raises(ConvergenceError) as info:
        solver.solve(np.ones(B.shape[1]), AdmmOptions(max_iter=3, log_every=1), solver.initial_state(W0, 1.0))
    assert len(info.value.trace) == 3


def test_matches_cvxpy(random_complex):
    cp = pytest.importorskip("cvxpy")
    B, Bt, C, Ct, radius, W0 = small_problem(random_complex)
    solver = GroupBallAdmm(B, Bt, C, Ct, radius)
    delta = np.ones(B.shape[1])
    result = solver.solve(delta, AdmmOptions(), solver.initial_state(W0, 1.0))

    W = cp.Variable(W0.shape, complex=True)
    mismatch = B @ W - Bt
    problem = cp.Problem(
        cp.Minimize(cp.sum(cp.norm(cp.hstack([cp.real(W), cp.imag(W)]), 2, axis=1))),
        [cp.norm(cp.hstack([cp.real(mismatch), cp.imag(mismatch)]), "fro") <= radius, C @ W == Ct],
    )
    problem.solve()
    assert_allclose(delta @ np.linalg.norm(result.W, axis=1), problem.value, rtol=1e-4)
    # the certificate never exceeds the optimum
    assert result.dual_bound <= problem.value * (1 + 1e-5)
