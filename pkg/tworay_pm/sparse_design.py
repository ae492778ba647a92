"""
Sparse Design - antenna location selection by group-sparse and reweighted l1 programs

A dense uniform grid of candidate antennas is thinned by minimising the sum of
per-antenna group norms under the eavesdropper error budget and the exact
desired-position constraints. Antennas whose group norm falls below gamma are
removed and the survivors are re-solved with the closed form.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sl

from .admm import AdmmOptions, FeasibleSetProjector, GroupBallAdmm, certificate_bound
from .array_model import ArrayLayout, build_steering_set, uniform_layout
from .closed_form import (
    TWO_RAY, CombinedChannel, FixedArrayDesign, GainDiagonals, SymbolSolve, WeightMatrix,
    design_fixed_array, symbol_error_norms, table_error_norm,
)
from .errors import ConvergenceError, DesignInputError, InfeasibleError, SolverError
from .geometry import ScenarioGeometry, desired_paths, ring_paths
from .targets import ConstellationSpec, TargetResponses, build_targets

log = logging.getLogger(__name__)

BACKENDS = ("admm", "cvxpy")
CVXPY_SOLVERS = ("CLARABEL", "ECOS", "SCS")
# Objective within this relative distance of the certified lower bound
GAP_CONTRACT = 1e-5


@dataclass(frozen=True, eq=False)
class GroupSparseProblem:
    """Candidate grid, channel and targets of the stacked M-symbol program"""

    layout: ArrayLayout
    geometry: ScenarioGeometry
    spec: ConstellationSpec
    channel: CombinedChannel
    gains: GainDiagonals
    targets: TargetResponses
    alpha: float
    gamma: float = 1e-3
    channel_mode: str = TWO_RAY
    rcond: float | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise DesignInputError(f"alpha must be positive, got {self.alpha}")
        if not self.gamma > 0:
            raise DesignInputError(f"gamma must be positive, got {self.gamma}")

    @classmethod
    def build(cls, layout: ArrayLayout, geo: ScenarioGeometry, spec: ConstellationSpec, alpha: float,
              gamma: float = 1e-3, *, channel_mode: str = TWO_RAY, targets: TargetResponses | None = None,
              rcond: float | None = None) -> "GroupSparseProblem":
        desired = desired_paths(geo)
        ring = ring_paths(geo)
        gains = GainDiagonals.from_paths(desired, ring, channel_mode)
        channel = CombinedChannel.from_parts(build_steering_set(layout, desired, ring), gains)
        if targets is None:
            targets = build_targets(spec, len(desired), len(ring))
        return cls(layout, geo, spec, channel, gains, targets, float(alpha), float(gamma),
                   channel_mode, rcond)

    @property
    def symbol_count(self) -> int:
        return self.targets.symbol_count

    @property
    def radius(self) -> float:
        """Frobenius radius of the stacked mismatch; alpha is in per-symbol RMS units"""
        return self.alpha * np.sqrt(self.symbol_count)

    def tiled_gains(self) -> dict[str, np.ndarray]:
        """Gain and phase vectors Kronecker-tiled with ones(M) (constant M-blocks)"""
        ones = np.ones(self.symbol_count)
        g = self.gains
        return {
            "los_eaves": np.kron(g.los_eaves, ones),
            "reflect_eaves": np.kron(g.reflect_eaves, ones),
            "los_desired": np.kron(g.los_desired, ones),
            "reflect_desired": np.kron(g.reflect_desired, ones),
        }

    def stacked_eaves_responses(self, W: np.ndarray) -> np.ndarray:
        """M x (R-r) eavesdropper responses evaluated with the tiled gain vectors"""
        desired = desired_paths(self.geometry)
        steering = build_steering_set(self.layout, desired, ring_paths(self.geometry))
        tiled = self.tiled_gains()
        m = self.symbol_count
        los = (W.conj().T @ steering.los_eaves).reshape(-1, order="F")
        refl = (W.conj().T @ steering.reflected_eaves).reshape(-1, order="F")
        stacked = tiled["los_eaves"] * los + tiled["reflect_eaves"] * refl
        return stacked.reshape(m, -1, order="F")

    def eaves_mismatch(self, W: np.ndarray) -> float:
        """Frobenius norm of P_E minus the designed eavesdropper responses"""
        return float(np.linalg.norm(symbol_error_norms(self.channel, W, self.targets)))

    def equality_residual(self, W: np.ndarray) -> float:
        _, desired = self.channel.responses(W)
        return float(np.max(np.abs(desired - self.targets.desired)))

    # Operators in the solver's orientation: B W - Bt is the conjugated eavesdropper mismatch
    @cached_property
    def operators(self):
        B = self.channel.eaves.conj().T
        Bt = self.targets.eaves.conj().T
        C = self.channel.desired.conj().T
        Ct = self.targets.desired.conj().T
        return B, Bt, C, Ct

    @cached_property
    def admm(self) -> GroupBallAdmm:
        return GroupBallAdmm(*self.operators, self.radius)

    @property
    def projector(self) -> FeasibleSetProjector:
        return self.admm.projector

    @property
    def minimal_residual(self) -> float:
        """Smallest stacked mismatch of any equality-feasible W on the grid"""
        return self.projector.floor

    def subset_projector(self, indices) -> FeasibleSetProjector:
        """Feasible-set projection for the antennas at ``indices`` only"""
        B, Bt, C, Ct = self.operators
        indices = np.asarray(indices, dtype=int)
        return FeasibleSetProjector(B[:, indices], Bt, C[:, indices], Ct, self.radius)


@dataclass(frozen=True, eq=False)
class GroupRow:
    """One antenna's coefficients across all symbols"""

    coefficients: np.ndarray

    @property
    def group_norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))


def group_rows(W: np.ndarray) -> list[GroupRow]:
    return [GroupRow(row) for row in W]


@dataclass
class SolverDiagnostics:
    backend: str
    iterations: int
    objective: float
    equality_residual: float
    ball_slack: float
    dual_bound: float
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    # relative distance between the solver output and its projection onto the feasible set
    projection_step: float = 0.0

    @property
    def duality_gap(self) -> float:
        return self.objective - self.dual_bound

    @property
    def relative_gap(self) -> float:
        return self.duality_gap / max(self.objective, 1e-300)


@dataclass
class GroupL1Solution:
    weights: np.ndarray
    group_weights: np.ndarray
    diagnostics: SolverDiagnostics
    state: object = None

    @property
    def group_norms(self) -> np.ndarray:
        return np.linalg.norm(self.weights, axis=1)


def _check_feasible(problem: GroupSparseProblem) -> None:
    if not problem.projector.feasible:
        raise InfeasibleError(
            f"alpha={problem.alpha:.6g} is below what the candidate grid can reach",
            min_residual=problem.minimal_residual / np.sqrt(problem.symbol_count),
        )


def _diagnostics(problem, W, delta, backend, iterations, dual_bound, **extra) -> SolverDiagnostics:
    return SolverDiagnostics(
        backend=backend,
        iterations=iterations,
        objective=float(delta @ np.linalg.norm(W, axis=1)),
        equality_residual=problem.equality_residual(W),
        ball_slack=problem.radius - problem.eaves_mismatch(W),
        dual_bound=dual_bound,
        **extra,
    )


def _solve_admm(problem, delta, options, warm):
    solver = problem.admm
    if warm is None:
        start, _ = problem.projector.project(np.zeros((problem.layout.count, problem.symbol_count), dtype=complex))
        warm = solver.initial_state(start, options.rho)
    result = solver.solve(delta, options, warm)
    diagnostics = _diagnostics(problem, result.W, delta, "admm", result.iterations, result.dual_bound,
                               primal_residual=result.primal_residual, dual_residual=result.dual_residual)
    return result.W, diagnostics, result.state


def _cvxpy_bound(problem, W, mu, delta) -> float:
    """Certificate from the ball multiplier; the equality multiplier is fitted on the support"""
    B, Bt, C, Ct = problem.operators
    R = B @ W - Bt
    mu = 0.0 if mu is None else max(float(np.real(mu)), 0.0)
    gamma = mu * R / max(float(np.linalg.norm(R)), 1e-300)
    norms = np.linalg.norm(W, axis=1)
    support = norms > 1e-6 * norms.max()
    # stationarity on the support: B^H gamma + C^H lam = -delta_n w_n / ||w_n||
    target = -(delta[support] / norms[support])[:, None] * W[support] - (B.conj().T @ gamma)[support]
    lam = sl.lstsq(C.conj().T[support], target)[0]
    return certificate_bound(B, Bt, C, Ct, problem.radius, gamma, lam, delta)


def _solve_cvxpy(problem, delta, options):
    import cvxpy as cp

    B, Bt, C, Ct = problem.operators
    n, m = problem.layout.count, problem.symbol_count
    W = cp.Variable((n, m), complex=True)
    # Real lifting: each antenna's group norm runs over 2M real coordinates
    lifted = cp.hstack([cp.real(W), cp.imag(W)])
    mismatch = B @ W - Bt
    ball = cp.norm(cp.hstack([cp.real(mismatch), cp.imag(mismatch)]), "fro") <= problem.radius
    constraints = [ball, cp.real(C @ W) == Ct.real, cp.imag(C @ W) == Ct.imag]
    prob = cp.Problem(cp.Minimize(delta @ cp.norm(lifted, 2, axis=1)), constraints)

    requested = options.get("solver")
    candidates = [requested] if requested else [s for s in CVXPY_SOLVERS if s in cp.installed_solvers()]
    failures = []
    for name in candidates:
        try:
            prob.solve(solver=name)
        except cp.error.SolverError as err:
            failures.append(f"{name}: {err}")
            log.warning("cvxpy solver %s failed, trying the next one", name)
            continue
        if prob.status in ("optimal", "optimal_inaccurate") and W.value is not None:
            break
        failures.append(f"{name}: status '{prob.status}'")
    else:
        raise SolverError("cvxpy could not solve the group-sparse program (" + "; ".join(failures) + ")")

    raw = np.asarray(W.value)
    W_opt, _ = problem.projector.project(raw)
    step = float(np.linalg.norm(W_opt - raw) / max(np.linalg.norm(raw), 1e-300))
    stats = prob.solver_stats
    diagnostics = _diagnostics(problem, W_opt, delta, "cvxpy", int(stats.num_iters or 0),
                               _cvxpy_bound(problem, W_opt, ball.dual_value, delta), projection_step=step)
    return W_opt, diagnostics, None


def solve_group_l1(problem: GroupSparseProblem, group_weights: np.ndarray | None = None, *,
                   backend: str = "admm", options: AdmmOptions | dict | None = None,
                   warm_start=None) -> GroupL1Solution:
    """Minimise sum_n delta_n ||w~_n|| under the error budget and exact desired responses

    Raises ConvergenceError unless the objective is certified within
    GAP_CONTRACT of the optimum.
    """
    if backend not in BACKENDS:
        raise DesignInputError(f"unknown solver backend '{backend}'")
    _check_feasible(problem)
    delta = np.ones(problem.layout.count) if group_weights is None else np.asarray(group_weights, float)

    if backend == "admm":
        W, diagnostics, state = _solve_admm(problem, delta, options or AdmmOptions(), warm_start)
    else:
        W, diagnostics, state = _solve_cvxpy(problem, delta, options or {})

    log.info("%s solve: %d iterations, objective %.8g, relative gap %.2e, equality residual %.2e",
             backend, diagnostics.iterations, diagnostics.objective, diagnostics.relative_gap,
             diagnostics.equality_residual)
    if not diagnostics.relative_gap <= GAP_CONTRACT:
        raise ConvergenceError(
            f"{backend} solve stopped at relative duality gap {diagnostics.relative_gap:.3e} "
            f"(objective {diagnostics.objective:.8g}, lower bound {diagnostics.dual_bound:.8g}); "
            f"the contract is {GAP_CONTRACT:.0e}",
            trace=[(diagnostics.iterations, diagnostics.objective, diagnostics.dual_bound)],
        )
    return GroupL1Solution(W, delta, diagnostics, state)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    objective: float
    weighted_objective: float
    weighted_previous: float
    log_surrogate: float
    feasibility_residual: float
    ball_slack: float
    surviving_count: int
    solver_iterations: int
    duality_gap: float


def _record(iteration, solution: GroupL1Solution, gamma: float,
            previous: GroupL1Solution | None = None) -> IterationRecord:
    """Trace entry; weighted_previous is the previous iterate under this iteration's weights"""
    norms = solution.group_norms
    d = solution.diagnostics
    weighted_previous = float("nan") if previous is None else float(solution.group_weights @ previous.group_norms)
    return IterationRecord(
        iteration=iteration,
        objective=float(norms.sum()),
        weighted_objective=float(solution.group_weights @ norms),
        weighted_previous=weighted_previous,
        log_surrogate=float(np.sum(np.log(norms + gamma))),
        feasibility_residual=d.equality_residual,
        ball_slack=d.ball_slack,
        surviving_count=int(np.count_nonzero(norms >= gamma)),
        solver_iterations=d.iterations,
        duality_gap=d.duality_gap,
    )


@dataclass(eq=False)
class SparseDesignResult:
    """Thinned array, polished weights and the iteration trace"""

    label: str
    survivors: np.ndarray
    layout: ArrayLayout
    weights: WeightMatrix
    polished: FixedArrayDesign
    grid_group_norms: np.ndarray
    pre_polish_error_norm: float
    polish: str = "closed-form"
    trace: list[IterationRecord] = field(default_factory=list)

    @property
    def antenna_count(self) -> int:
        return self.layout.count

    @property
    def aperture(self) -> float:
        return self.layout.aperture

    @property
    def average_spacing(self) -> float | None:
        return self.layout.average_spacing

    @property
    def error_norm(self) -> float:
        return self.polished.error_norm


def finalize(problem: GroupSparseProblem, solution: GroupL1Solution, label: str,
             trace: list[IterationRecord] | None = None, gamma: float | None = None) -> SparseDesignResult:
    """Prune groups below gamma and polish the survivors

    The closed form is tried first. If its error norm exceeds alpha, the
    pruned weights are projected onto the survivors' feasible set instead,
    which keeps the final error norm within alpha.
    """
    gamma = problem.gamma if gamma is None else gamma
    norms = solution.group_norms
    survivors = np.flatnonzero(norms >= gamma)
    if survivors.size == 0:
        raise SolverError(f"{label}: no antenna has a group norm of at least gamma={gamma}")

    pruned = np.where((norms >= gamma)[:, None], solution.weights, 0.0)
    pre_polish = table_error_norm(symbol_error_norms(problem.channel, pruned, problem.targets))

    layout = problem.layout.subset(survivors)
    polished = design_fixed_array(layout, problem.geometry, problem.spec, channel_mode=problem.channel_mode,
                                  targets=problem.targets, rcond=problem.rcond, label=label)
    polish = "closed-form"
    if polished.error_norm > problem.alpha:
        log.warning("%s: closed-form polish gives error norm %.8g above alpha %.8g; projecting the pruned weights",
                    label, polished.error_norm, problem.alpha)
        projector = problem.subset_projector(survivors)
        if not projector.feasible:
            raise InfeasibleError(f"{label}: the {survivors.size} surviving antennas cannot meet alpha",
                                  min_residual=projector.floor / np.sqrt(problem.symbol_count))
        weights, _ = projector.project(solution.weights[survivors])
        solves = [SymbolSolve("projected", survivors.size)] * problem.symbol_count
        polished = FixedArrayDesign.from_weights(layout, weights, problem.channel.subset(survivors),
                                                 problem.targets, problem.channel_mode, solves, label)
        polish = "projected"

    log.info("%s: %d of %d antennas kept, error norm %.6g before and %.6g after polishing (%s)",
             label, survivors.size, problem.layout.count, pre_polish, polished.error_norm, polish)
    return SparseDesignResult(
        label=label,
        survivors=survivors,
        layout=layout,
        weights=polished.weights,
        polished=polished,
        grid_group_norms=norms,
        pre_polish_error_norm=pre_polish,
        polish=polish,
        trace=list(trace or [_record(0, solution, gamma)]),
    )


def reweighting_weights(group_norms: np.ndarray, gamma: float) -> np.ndarray:
    """delta_n = 1 / (||w~_n|| + gamma)"""
    return 1.0 / (np.asarray(group_norms, dtype=float) + gamma)


def reweight_iterate(problem: GroupSparseProblem, max_iters: int = 10, gamma: float | None = None, *,
                     backend: str = "admm", options=None,
                     initial: GroupL1Solution | None = None) -> SparseDesignResult:
    """Reweighted group l1 with delta_n = 1 / (||w~_n|| + gamma) until the survivor set settles"""
    if max_iters < 1:
        raise DesignInputError(f"max_iters must be at least 1, got {max_iters}")
    gamma = problem.gamma if gamma is None else float(gamma)

    solution = initial or solve_group_l1(problem, backend=backend, options=options)
    trace = [_record(0, solution, gamma)]
    survivors = solution.group_norms >= gamma

    for u in range(1, max_iters + 1):
        delta = reweighting_weights(solution.group_norms, gamma)
        previous = solution
        try:
            solution = solve_group_l1(problem, delta, backend=backend, options=options,
                                      warm_start=previous.state)
        except ConvergenceError as err:
            err.trace = [*trace, *err.trace]
            raise
        record = _record(u, solution, gamma, previous)
        trace.append(record)
        current = solution.group_norms >= gamma
        log.info("reweighting iteration %d: %d antennas above gamma, weighted objective %.8g (previous %.8g)",
                 u, int(current.sum()), record.weighted_objective, record.weighted_previous)
        if record.weighted_objective > record.weighted_previous * (1 + 1e-6):
            log.warning("reweighting iteration %d did worse than the previous iterate under the same weights", u)
        if np.array_equal(current, survivors):
            break
        survivors = current

    return finalize(problem, solution, "reweighted", trace, gamma)


@dataclass(frozen=True)
class DesignSummary:
    label: str
    antenna_number: int
    aperture: float
    average_spacing: float | None
    error_norm: float


def summarize(result) -> DesignSummary:
    """Summary-table row for a fixed-array or sparse design"""
    layout = result.layout
    return DesignSummary(
        label=result.label,
        antenna_number=layout.count,
        aperture=layout.aperture,
        average_spacing=layout.average_spacing,
        error_norm=result.error_norm,
    )


def candidate_grid(points: int, aperture: float) -> ArrayLayout:
    """Uniform grid of ``points`` candidate antennas over ``aperture`` wavelengths"""
    if points < 2:
        raise DesignInputError(f"a candidate grid needs at least 2 points, got {points}")
    return uniform_layout(points, aperture / (points - 1))
