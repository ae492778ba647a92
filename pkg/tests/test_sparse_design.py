import dataclasses

import numpy as np
import pytest
from numpy.testing import assert_allclose

from tworay_pm.admm import AdmmOptions
from tworay_pm.array_model import ArrayLayout, uniform_layout
from tworay_pm.closed_form import design_fixed_array
from tworay_pm.errors import ConvergenceError, DesignInputError, InfeasibleError, SolverError
from tworay_pm.geometry import ScenarioGeometry, ring_angles_for_step
from tworay_pm.sparse_design import (
    GAP_CONTRACT, GroupSparseProblem, candidate_grid, finalize, group_rows, reweight_iterate, reweighting_weights,
    solve_group_l1, summarize,
)
from tworay_pm.targets import qpsk_spec


def assert_weighted_surrogate_decreases(trace):
    """Each solve does no worse under its own weights than the feasible previous iterate"""
    for before, record in zip(trace, trace[1:]):
        slack = 1e-6 * record.weighted_previous
        assert record.weighted_objective <= record.weighted_previous + slack, record.iteration
        assert record.log_surrogate <= before.log_surrogate + slack, record.iteration


@pytest.fixture(scope="module")
def small_case():
    """12 eavesdroppers, 21 candidates over 10 wavelengths, alpha from a 6-element ULA on the grid"""
    geo = dataclasses.replace(ScenarioGeometry(), ring_angles_deg=ring_angles_for_step(30.0))
    spec = qpsk_spec(seed=0)
    ula = design_fixed_array(uniform_layout(6, 1.0), geo, spec)
    problem = GroupSparseProblem.build(candidate_grid(21, 10.0), geo, spec, ula.error_norm)
    return problem, ula, solve_group_l1(problem)


def test_candidate_grid_spacing():
    grid = candidate_grid(401, 20.0)
    assert grid.count == 401
    assert_allclose(grid.average_spacing, 0.05)
    with pytest.raises(DesignInputError):
        candidate_grid(1, 20.0)


def test_tiled_gains_are_blockwise_constant(small_case):
    problem, _, _ = small_case
    tiled = problem.tiled_gains()
    for name, vector in tiled.items():
        expected = 4 * 12 if "eaves" in name else 4
        assert vector.shape == (expected,), name
        blocks = vector.reshape(-1, 4)
        assert np.all(blocks == blocks[:, :1]), name


def test_stacked_form_equals_per_symbol_responses(small_case, random_complex):
    problem, _, _ = small_case
    W = random_complex(21, 4)
    eaves, _ = problem.channel.responses(W)
    assert_allclose(problem.stacked_eaves_responses(W), eaves, rtol=1e-12, atol=1e-12)


def test_radius_is_stacked_alpha(small_case):
    problem, ula, _ = small_case
    assert_allclose(problem.radius, 2.0 * ula.error_norm)
    assert_allclose(problem.radius, ula.stacked_error_norm)


def test_group_l1_certificates(small_case):
    problem, _, solution = small_case
    d = solution.diagnostics
    assert d.backend == "admm"
    assert d.iterations > 0
    assert d.equality_residual <= 1e-9
    assert d.ball_slack >= -1e-9 * problem.radius
    assert d.dual_bound <= d.objective + 1e-9
    assert d.relative_gap <= GAP_CONTRACT
    assert d.projection_step == 0.0
    assert_allclose(d.objective, solution.group_norms.sum())


def test_group_l1_beats_the_embedded_ula(small_case):
    problem, ula, solution = small_case
    W = np.zeros((21, 4), dtype=complex)
    W[::2][:6] = ula.weights.weights
    # the ULA occupies every second grid point and is feasible by construction
    assert problem.equality_residual(W) <= 1e-8
    assert solution.diagnostics.objective <= np.linalg.norm(W, axis=1).sum() * (1 + 1e-6)


def test_loose_solve_raises_instead_of_returning(small_case):
    problem, _, _ = small_case
    with pytest.raises(ConvergenceError) as info:
        solve_group_l1(problem, options=AdmmOptions(max_iter=20))
    assert "duality gap" in str(info.value)


def test_minimal_residual_sets_feasibility(small_case):
    problem, _, _ = small_case
    assert problem.minimal_residual < problem.radius
    assert problem.projector.feasible


def test_group_rows(small_case):
    _, _, solution = small_case
    rows = group_rows(solution.weights)
    assert len(rows) == 21
    assert_allclose([row.group_norm for row in rows], solution.group_norms)
    assert all(row.group_norm >= 0 for row in rows)


def test_alpha_below_reach_is_infeasible(small_case):
    problem, _, _ = small_case
    # three antennas cannot approach twelve scrambled eavesdropper targets
    tight = GroupSparseProblem.build(uniform_layout(3, 1.0), problem.geometry, problem.spec, 1e-3)
    with pytest.raises(InfeasibleError) as info:
        solve_group_l1(tight)
    assert info.value.min_residual > 1e-3
    assert info.value.exit_code == 4


@pytest.mark.parametrize("kwargs", [dict(alpha=0.0), dict(alpha=1.0, gamma=0.0)])
def test_problem_parameters_validated(small_case, kwargs):
    problem, _, _ = small_case
    with pytest.raises(DesignInputError):
        GroupSparseProblem.build(problem.layout, problem.geometry, problem.spec, **kwargs)


def test_unknown_backend(small_case):
    problem, _, _ = small_case
    with pytest.raises(DesignInputError):
        solve_group_l1(problem, backend="simplex")


def test_reweighting_weights():
    assert_allclose(reweighting_weights(np.array([0.0]), 0.001), [1000.0])
    delta = reweighting_weights(np.array([0.0, 0.5, 3.0]), 1e6)
    assert delta.max() / delta.min() < 1 + 1e-5


def test_reweighted_design(small_case):
    problem, ula, solution = small_case
    usual = finalize(problem, solution, "usual-l1")
    result = reweight_iterate(problem, max_iters=10, initial=solution)

    assert result.label == "reweighted"
    assert 1 <= len(result.trace) <= 11
    assert result.trace[0].iteration == 0
    assert result.antenna_count <= usual.antenna_count

    norms = result.grid_group_norms
    assert np.all(norms[result.survivors] >= problem.gamma)
    pruned = np.setdiff1d(np.arange(problem.layout.count), result.survivors)
    assert np.all(norms[pruned] < problem.gamma)

    for record in result.trace:
        assert record.feasibility_residual <= 1e-9
        assert record.ball_slack >= -1e-9 * problem.radius
    assert_weighted_surrogate_decreases(result.trace)

    assert result.error_norm <= problem.alpha * (1 + 1e-9)
    assert result.polished.constraint_residual <= 1e-8
    assert_allclose(result.layout.offsets, problem.layout.offsets[result.survivors])


def test_polish_falls_back_to_projection(small_case):
    problem, _, solution = small_case
    # a heavily truncated closed form misses the budget on the survivors
    truncating = dataclasses.replace(problem, rcond=0.5)
    result = finalize(truncating, solution, "usual-l1")
    assert result.polish == "projected"
    assert result.polished.solve_paths == ["projected"] * 4
    assert result.error_norm <= problem.alpha * (1 + 1e-9)
    assert result.polished.constraint_residual <= 1e-8


def test_closed_form_polish_kept_when_within_budget(small_case):
    problem, _, solution = small_case
    result = finalize(problem, solution, "usual-l1")
    assert result.error_norm <= problem.alpha * (1 + 1e-9)
    assert (result.polish == "projected") == ("projected" in result.polished.solve_paths)


def test_reweight_requires_an_iteration(small_case):
    problem, _, _ = small_case
    with pytest.raises(DesignInputError):
        reweight_iterate(problem, max_iters=0)


def test_empty_survivor_set(small_case):
    problem, _, solution = small_case
    with pytest.raises(SolverError):
        finalize(problem, solution, "usual-l1", gamma=1e6)


def test_summary_rows(qpsk):
    geo = dataclasses.replace(ScenarioGeometry(), ring_angles_deg=ring_angles_for_step(30.0))
    ula = summarize(design_fixed_array(uniform_layout(30, 0.5), geo, qpsk))
    assert (ula.antenna_number, ula.aperture, ula.average_spacing) == (30, 14.5, 0.5)

    eight = summarize(design_fixed_array(ArrayLayout(np.linspace(0.0, 19.8, 8)), geo, qpsk, label="eight"))
    assert eight.antenna_number == 8
    assert_allclose(eight.aperture, 19.8)
    assert_allclose(eight.average_spacing, 2.8286, atol=5e-5)

    single = summarize(design_fixed_array(ArrayLayout(np.array([0.0])), geo, qpsk, label="single"))
    assert single.aperture == 0.0
    assert single.average_spacing is None


def test_cvxpy_backend_agrees(small_case):
    pytest.importorskip("cvxpy")
    problem, _, solution = small_case
    other = solve_group_l1(problem, backend="cvxpy")
    assert other.diagnostics.backend == "cvxpy"
    assert other.diagnostics.equality_residual <= 1e-9
    assert other.diagnostics.relative_gap <= GAP_CONTRACT
    assert_allclose(other.diagnostics.objective, solution.diagnostics.objective, rtol=2e-5)


@pytest.mark.slow
def test_reference_scenario_thins_the_grid(reference_ula_design):
    geo = ScenarioGeometry()
    problem = GroupSparseProblem.build(candidate_grid(401, 20.0), geo, qpsk_spec(seed=0),
                                       reference_ula_design.error_norm)
    usual_solution = solve_group_l1(problem)
    usual = finalize(problem, usual_solution, "usual-l1")
    reweighted = reweight_iterate(problem, initial=usual_solution)

    assert usual.antenna_count > reweighted.antenna_count
    assert reweighted.antenna_count <= 15
    assert usual.error_norm <= problem.alpha * (1 + 1e-9)
    assert reweighted.error_norm <= problem.alpha * (1 + 1e-9)
    assert_weighted_surrogate_decreases(reweighted.trace)
