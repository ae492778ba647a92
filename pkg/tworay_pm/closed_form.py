"""
Closed Form - per-symbol equality-constrained least-squares weight design

The production path solves the KKT system of

    min ||p_E - w^H A_E||_2   subject to   w^H A_L = p_L

with a pivoted LU factorisation. When that system is numerically singular,
which is the normal situation for eavesdroppers clustered around the desired
direction, the minimiser is obtained by null-space elimination instead.

That elimination needs a singular-value cut-off, and the cut-off acts as a
regulariser: the exact minimiser of the reference scenario has a weight norm
near 1e10. Unless a cut-off is fixed, the weakest truncation whose weights
still meet the desired responses to CONSTRAINT_TOL is chosen, and the
objective excess over the untruncated fit is reported with the weights.

The printed Lagrange-multiplier formula is kept for comparison only.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sl

from .array_model import ArrayLayout, SteeringSet, build_steering_set
from .errors import DesignInputError, InconsistentConstraintError, SingularSystemError
from .geometry import PathParams, ScenarioGeometry, desired_paths, ring_paths
from .targets import ConstellationSpec, TargetResponses, build_targets, make_rng

log = logging.getLogger(__name__)

TWO_RAY = "two-ray"
LOS_ONLY = "los-only"
CHANNEL_MODES = (TWO_RAY, LOS_ONLY)

DEFAULT_RCOND = 1e-7
# Truncation levels tried, strongest first, when no rcond is fixed
RCOND_SWEEP = tuple(10.0 ** -k for k in range(7, 16))
CONSTRAINT_TOL = 1e-8
CONCORDANCE_STREAM = 7


@dataclass(frozen=True, eq=False)
class GainDiagonals:
    """Diagonals of K1..K4: attenuation times phase factor per position"""

    los_eaves: np.ndarray
    reflect_eaves: np.ndarray
    los_desired: np.ndarray
    reflect_desired: np.ndarray

    @classmethod
    def from_paths(cls, desired: PathParams, ring: PathParams, channel_mode: str = TWO_RAY) -> "GainDiagonals":
        if channel_mode not in CHANNEL_MODES:
            raise DesignInputError(f"unknown channel mode '{channel_mode}'")
        reflect = 0.0 if channel_mode == LOS_ONLY else 1.0
        return cls(
            los_eaves=ring.los_attenuation * np.exp(1j * ring.los_phase),
            reflect_eaves=reflect * ring.reflect_attenuation * np.exp(1j * ring.reflect_phase),
            los_desired=desired.los_attenuation * np.exp(1j * desired.los_phase),
            reflect_desired=reflect * desired.reflect_attenuation * np.exp(1j * desired.reflect_phase),
        )

    @property
    def K1(self) -> np.ndarray:
        return np.diag(self.los_eaves)

    @property
    def K2(self) -> np.ndarray:
        return np.diag(self.reflect_eaves)

    @property
    def K3(self) -> np.ndarray:
        return np.diag(self.los_desired)

    @property
    def K4(self) -> np.ndarray:
        return np.diag(self.reflect_desired)


@dataclass(frozen=True, eq=False)
class CombinedChannel:
    """Columns a_k such that the response at position k is w^H a_k"""

    eaves: np.ndarray
    desired: np.ndarray

    @classmethod
    def from_parts(cls, steering: SteeringSet, gains: GainDiagonals) -> "CombinedChannel":
        # S K is a column scaling, so broadcast instead of forming diagonal matrices
        return cls(
            eaves=steering.los_eaves * gains.los_eaves + steering.reflected_eaves * gains.reflect_eaves,
            desired=steering.los_desired * gains.los_desired
            + steering.reflected_desired * gains.reflect_desired,
        )

    def subset(self, indices) -> "CombinedChannel":
        indices = np.asarray(indices, dtype=int)
        return CombinedChannel(eaves=self.eaves[indices], desired=self.desired[indices])

    def responses(self, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(M x K eavesdropper, M x r desired) responses w_m^H A for every column of ``weights``"""
        w_h = np.conj(np.atleast_2d(weights.T if weights.ndim == 2 else weights[None, :]))
        return w_h @ self.eaves, w_h @ self.desired


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """N x M weights, one column per constellation symbol"""

    weights: np.ndarray

    @property
    def antenna_count(self) -> int:
        return self.weights.shape[0]

    @property
    def symbol_count(self) -> int:
        return self.weights.shape[1]

    def column(self, m: int) -> np.ndarray:
        return self.weights[:, m]

    @property
    def group_norms(self) -> np.ndarray:
        """Row norms ||w~_n||_2 across symbols"""
        return np.linalg.norm(self.weights, axis=1)


def _check_sizes(A_E, A_L, p_E, p_L):
    if A_E.ndim != 2 or A_E.shape[1] < 1:
        raise DesignInputError("at least one eavesdropper position is required (R - r >= 1)")
    if A_L.ndim != 2 or A_L.shape[1] < 1:
        raise DesignInputError("at least one desired position is required")
    if A_E.shape[0] != A_L.shape[0]:
        raise DesignInputError("A_E and A_L must have the same number of antenna rows")
    if p_E.shape != (A_E.shape[1],) or p_L.shape != (A_L.shape[1],):
        raise DesignInputError("target vectors do not match the channel column counts")


def _check_constraint_rank(A_L, p_L):
    rank = np.linalg.matrix_rank(A_L)
    if rank < A_L.shape[1]:
        w0 = sl.lstsq(A_L.conj().T, np.conj(p_L))[0]
        residual = np.linalg.norm(A_L.conj().T @ w0 - np.conj(p_L))
        if residual > 1e-9 * max(1.0, np.linalg.norm(p_L)):
            raise InconsistentConstraintError(
                f"desired-position constraints are inconsistent (rank {rank} of {A_L.shape[1]}, "
                f"residual {residual:.3g})"
            )


def kkt_matrix(A_E: np.ndarray, A_L: np.ndarray) -> np.ndarray:
    """[A_E A_E^H, A_L; A_L^H, 0]"""
    r = A_L.shape[1]
    return np.block([
        [A_E @ A_E.conj().T, A_L],
        [A_L.conj().T, np.zeros((r, r), dtype=complex)],
    ])


def solve_symbol_kkt(A_E, A_L, p_E, p_L, *, rcond: float = DEFAULT_RCOND) -> np.ndarray:
    """Minimiser of the constrained least-squares problem from its KKT system"""
    A_E, A_L = np.asarray(A_E, dtype=complex), np.asarray(A_L, dtype=complex)
    p_E, p_L = np.asarray(p_E, dtype=complex).reshape(-1), np.asarray(p_L, dtype=complex).reshape(-1)
    _check_sizes(A_E, A_L, p_E, p_L)
    _check_constraint_rank(A_L, p_L)

    n = A_E.shape[0]
    kkt = kkt_matrix(A_E, A_L)
    if np.linalg.cond(kkt) * rcond >= 1.0:
        rank = int(np.linalg.matrix_rank(kkt, tol=rcond * np.linalg.norm(kkt, 2)))
        raise SingularSystemError("KKT matrix is numerically singular", size=kkt.shape[0], rank=rank)

    rhs = np.concatenate([A_E @ np.conj(p_E), np.conj(p_L)])
    solution = sl.lu_solve(sl.lu_factor(kkt), rhs)
    return solution[:n]


def solve_symbol_reduced(A_E, A_L, p_E, p_L, *, rcond: float = DEFAULT_RCOND) -> tuple[np.ndarray, int]:
    """Minimum-norm minimiser by null-space elimination; returns (w, numerical rank)"""
    A_E, A_L = np.asarray(A_E, dtype=complex), np.asarray(A_L, dtype=complex)
    p_E, p_L = np.asarray(p_E, dtype=complex).reshape(-1), np.asarray(p_L, dtype=complex).reshape(-1)
    _check_sizes(A_E, A_L, p_E, p_L)
    _check_constraint_rank(A_L, p_L)

    constraint = A_L.conj().T
    w0 = sl.lstsq(constraint, np.conj(p_L))[0]
    basis = sl.null_space(constraint)
    if basis.shape[1] == 0:
        return w0, 0
    reduced = A_E.conj().T @ basis
    z, _, rank, _ = sl.lstsq(reduced, np.conj(p_E) - A_E.conj().T @ w0, cond=rcond)
    return w0 + basis @ z, int(rank)


def symbol_objective(w, A_E, p_E) -> float:
    """||p_E - w^H A_E||_2"""
    return float(np.linalg.norm(p_E - np.conj(w) @ A_E))


def symbol_constraint_residual(w, A_L, p_L) -> float:
    return float(np.max(np.abs(np.conj(w) @ A_L - p_L)))


@dataclass(frozen=True, eq=False)
class TruncatedSolve:
    """Reduced solve at a chosen cut-off, with the untruncated fit for reference"""

    weights: np.ndarray
    rcond: float
    rank: int
    objective: float
    untruncated_objective: float
    constraint_residual: float

    @property
    def objective_excess(self) -> float:
        return self.objective - self.untruncated_objective


def solve_symbol_swept(A_E, A_L, p_E, p_L, *, sweep=RCOND_SWEEP, tol: float = CONSTRAINT_TOL) -> TruncatedSolve:
    """Reduced solve at the weakest cut-off in ``sweep`` whose constraint residual stays within ``tol``

    The sweep runs from strong to weak truncation and stops at the first
    cut-off that misses the desired responses; among the cut-offs before it
    the one with the smallest objective wins.
    """
    A_E, A_L = np.asarray(A_E, dtype=complex), np.asarray(A_L, dtype=complex)
    p_E, p_L = np.asarray(p_E, dtype=complex).reshape(-1), np.asarray(p_L, dtype=complex).reshape(-1)
    _check_sizes(A_E, A_L, p_E, p_L)
    _check_constraint_rank(A_L, p_L)

    constraint = A_L.conj().T
    w0 = sl.lstsq(constraint, np.conj(p_L))[0]
    basis = sl.null_space(constraint)
    reduced = A_E.conj().T @ basis
    if basis.shape[1] == 0 or not np.any(reduced):
        objective = symbol_objective(w0, A_E, p_E)
        return TruncatedSolve(w0, float(sweep[0]), 0, objective, objective,
                              symbol_constraint_residual(w0, A_L, p_L))

    U, s, Vh = sl.svd(reduced, full_matrices=False)
    coefficients = U.conj().T @ (np.conj(p_E) - A_E.conj().T @ w0)

    def truncated(cut):
        keep = s > cut * s[0]
        return w0 + basis @ (Vh[keep].conj().T @ (coefficients[keep] / s[keep])), int(keep.sum())

    w_full, _ = truncated(max(reduced.shape) * np.finfo(float).eps)
    untruncated = symbol_objective(w_full, A_E, p_E)

    best = None
    for cut in sweep:
        w, rank = truncated(cut)
        residual = symbol_constraint_residual(w, A_L, p_L)
        objective = symbol_objective(w, A_E, p_E)
        if residual > tol:
            if best is None:
                log.warning("strongest truncation %.0e already misses the desired responses by %.3g", cut, residual)
                best = TruncatedSolve(w, float(cut), rank, objective, untruncated, residual)
            break
        if best is None or objective < best.objective:
            best = TruncatedSolve(w, float(cut), rank, objective, untruncated, residual)
    return best


@dataclass
class PrintedFormulaCheck:
    """Printed closed form evaluated next to the KKT solution"""

    weights: np.ndarray
    kkt_weights: np.ndarray
    relative_difference: float
    constraint_residual: float
    objective: float
    kkt_objective: float
    terms: dict = field(default_factory=dict)

    @property
    def concordant(self) -> bool:
        return self.relative_difference <= 1e-8


def _relative(a, b) -> float:
    scale = np.linalg.norm(b)
    diff = np.linalg.norm(a - b)
    return float(diff / scale) if scale > 0 else float(diff)


def _hermitian(m):
    return m.conj().T


def _inverse(matrix, what):
    if np.linalg.cond(matrix) > 1e14:
        raise SingularSystemError(f"{what} is numerically singular", size=matrix.shape[0],
                                  rank=int(np.linalg.matrix_rank(matrix)))
    return sl.inv(matrix)


def solve_symbol_printed(S_E, S_hat_E, S_L, S_hat_L, K: GainDiagonals, p_E, p_L) -> PrintedFormulaCheck:
    """Evaluate the printed K5/K6 expressions literally and compare with the KKT solution

    The only reordering is K6^H after S_L K3 and S_hat_L K4, which the printed
    product order leaves dimensionally undefined.
    """
    p_E = np.atleast_2d(np.asarray(p_E, dtype=complex))
    p_L = np.atleast_2d(np.asarray(p_L, dtype=complex))
    K1, K2, K3, K4 = K.K1, K.K2, K.K3, K.K4
    H = _hermitian

    K5 = (S_E @ K1 @ H(K1) @ H(S_E) + S_E @ K1 @ H(K2) @ H(S_E)
          + S_hat_E @ K2 @ H(K1) @ H(S_E) + S_hat_E @ K2 @ H(K2) @ H(S_hat_E))
    K5_inv = _inverse(K5, "K5")
    K5_inv_h = H(K5_inv)

    lead = (p_E @ H(K2) @ H(S_hat_E) @ K5_inv_h @ S_L @ K3
            - p_E @ H(K1) @ H(S_E) @ K5_inv_h @ S_L @ K3
            - p_E @ H(K2) @ H(S_hat_E) @ K5_inv_h @ S_hat_L @ K4
            - p_E @ H(K1) @ H(S_E) @ K5_inv_h @ S_hat_L @ K4
            - p_L)
    inner = (H(K3) @ H(S_L) @ K5_inv_h @ S_L @ K3 + H(K4) @ H(S_hat_L) @ K5_inv_h @ S_L @ K3
             + H(K3) @ H(S_L) @ K5_inv_h @ S_hat_L @ K4 + H(K4) @ H(S_hat_L) @ K5_inv_h @ S_hat_L @ K4)
    K6 = lead @ _inverse(inner, "K6 inner factor")

    projection = S_hat_E @ K2 @ H(p_E) - S_E @ K1 @ H(p_E)
    w = K5_inv @ (projection - S_L @ K3 @ H(K6) - S_hat_L @ K4 @ H(K6))
    w = w[:, 0]

    A_E = S_E @ K1 + S_hat_E @ K2
    A_L = S_L @ K3 + S_hat_L @ K4
    try:
        w_kkt = solve_symbol_kkt(A_E, A_L, p_E[0], p_L[0])
    except SingularSystemError:
        w_kkt = solve_symbol_reduced(A_E, A_L, p_E[0], p_L[0])[0]

    gram = A_E @ H(A_E)
    terms = {
        "gram_mismatch": _relative(K5, gram),
        "projection_mismatch": _relative(projection[:, 0], A_E @ np.conj(p_E[0])),
        "constraint_residual_kkt": float(np.max(np.abs(np.conj(w_kkt) @ A_L - p_L[0]))),
    }
    return PrintedFormulaCheck(
        weights=w,
        kkt_weights=w_kkt,
        relative_difference=_relative(w, w_kkt),
        constraint_residual=float(np.max(np.abs(np.conj(w) @ A_L - p_L[0]))),
        objective=symbol_objective(w, A_E, p_E[0]),
        kkt_objective=symbol_objective(w_kkt, A_E, p_E[0]),
        terms=terms,
    )


@dataclass(frozen=True)
class ConcordanceRecord:
    instance: int
    antennas: int
    desired: int
    eavesdroppers: int
    concordant: bool
    relative_difference: float
    constraint_residual: float
    objective_excess: float
    gram_mismatch: float
    projection_mismatch: float


def random_instance(rng: np.random.Generator, n: int, r: int, k: int):
    """Random steering-like matrices and gains for oracle comparisons"""
    def cplx(*shape):
        return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

    K = GainDiagonals(
        los_eaves=cplx(k), reflect_eaves=cplx(k), los_desired=cplx(r), reflect_desired=cplx(r),
    )
    return cplx(n, k), cplx(n, k), cplx(n, r), cplx(n, r), K, cplx(k), cplx(r)


def concordance_study(n_instances: int = 100, seed: int = 0) -> list[ConcordanceRecord]:
    """Printed formula against the KKT solution on random small instances"""
    rng = make_rng(seed, CONCORDANCE_STREAM)
    records = []
    for i in range(n_instances):
        # N <= 8, r <= 2, R - r <= 6, with enough eavesdroppers for a unique minimiser
        n = int(rng.integers(2, 9))
        r = int(rng.integers(max(1, n - 6), min(2, n - 1) + 1))
        k = int(rng.integers(max(n - r, (n + 1) // 2), 7))
        S_E, S_hat_E, S_L, S_hat_L, K, p_E, p_L = random_instance(rng, n, r, k)
        try:
            check = solve_symbol_printed(S_E, S_hat_E, S_L, S_hat_L, K, p_E, p_L)
        except SingularSystemError as err:
            log.info("instance %d: printed formula not evaluable: %s", i, err)
            nan = float("nan")
            records.append(ConcordanceRecord(i, n, r, k, False, nan, nan, nan, nan, nan))
            continue
        records.append(ConcordanceRecord(
            instance=i, antennas=n, desired=r, eavesdroppers=k,
            concordant=check.concordant,
            relative_difference=check.relative_difference,
            constraint_residual=check.constraint_residual,
            objective_excess=check.objective - check.kkt_objective,
            gram_mismatch=check.terms["gram_mismatch"],
            projection_mismatch=check.terms["projection_mismatch"],
        ))
    agreeing = sum(rec.concordant for rec in records)
    log.info("printed formula agrees with the KKT solution on %d of %d instances", agreeing, len(records))
    return records


def symbol_error_norms(channel: CombinedChannel, weights: np.ndarray, targets: TargetResponses) -> np.ndarray:
    """||p_{m,E} - w_m^H A_E||_2 for every symbol"""
    eaves, _ = channel.responses(weights)
    return np.linalg.norm(targets.eaves - eaves, axis=1)


def table_error_norm(symbol_norms: np.ndarray) -> float:
    """Summary-table figure: RMS of the per-symbol error norms"""
    return float(np.sqrt(np.mean(np.square(symbol_norms))))


def constraint_residual(channel: CombinedChannel, weights: np.ndarray, targets: TargetResponses) -> float:
    _, desired = channel.responses(weights)
    return float(np.max(np.abs(desired - targets.desired)))


@dataclass(frozen=True)
class SymbolSolve:
    """How one symbol's weights were obtained"""

    path: str
    rank: int
    rcond: float | None = None
    objective_excess: float = 0.0


@dataclass(eq=False)
class FixedArrayDesign:
    """Weights for a given layout together with their diagnostics"""

    layout: ArrayLayout
    weights: WeightMatrix
    channel: CombinedChannel
    targets: TargetResponses
    channel_mode: str
    symbol_error_norms: np.ndarray
    constraint_residual: float
    solves: list[SymbolSolve]
    label: str = "ula"

    @classmethod
    def from_weights(cls, layout: ArrayLayout, weights: np.ndarray, channel: CombinedChannel,
                     targets: TargetResponses, channel_mode: str, solves: list[SymbolSolve],
                     label: str = "ula") -> "FixedArrayDesign":
        return cls(
            layout=layout,
            weights=WeightMatrix(weights),
            channel=channel,
            targets=targets,
            channel_mode=channel_mode,
            symbol_error_norms=symbol_error_norms(channel, weights, targets),
            constraint_residual=constraint_residual(channel, weights, targets),
            solves=list(solves),
            label=label,
        )

    @property
    def error_norm(self) -> float:
        return table_error_norm(self.symbol_error_norms)

    @property
    def stacked_error_norm(self) -> float:
        return float(np.linalg.norm(self.symbol_error_norms))

    @property
    def solve_paths(self) -> list[str]:
        return [s.path for s in self.solves]

    @property
    def numerical_ranks(self) -> list[int]:
        return [s.rank for s in self.solves]

    @property
    def objective_excess(self) -> np.ndarray:
        """Per-symbol error norm above the untruncated minimiser's"""
        return np.array([s.objective_excess for s in self.solves])


def _solve_one(A_E, A_L, p_E, p_L, rcond) -> tuple[np.ndarray, SymbolSolve]:
    try:
        w = solve_symbol_kkt(A_E, A_L, p_E, p_L, rcond=DEFAULT_RCOND if rcond is None else rcond)
        return w, SymbolSolve("kkt", A_E.shape[0])
    except SingularSystemError as err:
        if rcond is None:
            choice = solve_symbol_swept(A_E, A_L, p_E, p_L)
            log.debug("KKT system singular (%s); reduced solve at rcond %.0e, rank %d",
                      err, choice.rcond, choice.rank)
            return choice.weights, SymbolSolve("reduced", choice.rank, choice.rcond, choice.objective_excess)
        w, rank = solve_symbol_reduced(A_E, A_L, p_E, p_L, rcond=rcond)
        exact, _ = solve_symbol_reduced(A_E, A_L, p_E, p_L, rcond=None)
        excess = symbol_objective(w, A_E, p_E) - symbol_objective(exact, A_E, p_E)
        log.debug("KKT system singular (%s); reduced solve with rank %d", err, rank)
        return w, SymbolSolve("reduced", rank, rcond, excess)


def solve_weights(channel: CombinedChannel, targets: TargetResponses, *,
                  rcond: float | None = None, workers: int = 1) -> tuple[np.ndarray, list[SymbolSolve]]:
    """Solve every symbol independently; rcond=None picks the truncation per symbol"""
    jobs = [(channel.eaves, channel.desired, targets.eaves[m], targets.desired[m], rcond)
            for m in range(targets.symbol_count)]

    def run(job):
        return _solve_one(*job)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]
    return np.column_stack([w for w, _ in results]), [s for _, s in results]


def fixed_array_channel(layout: ArrayLayout, geo: ScenarioGeometry, channel_mode: str = TWO_RAY) -> CombinedChannel:
    desired = desired_paths(geo)
    ring = ring_paths(geo)
    steering = build_steering_set(layout, desired, ring)
    return CombinedChannel.from_parts(steering, GainDiagonals.from_paths(desired, ring, channel_mode))


def design_fixed_array(layout: ArrayLayout, geo: ScenarioGeometry, spec: ConstellationSpec, *,
                       channel_mode: str = TWO_RAY, targets: TargetResponses | None = None,
                       rcond: float | None = None, workers: int = 1,
                       label: str = "ula") -> FixedArrayDesign:
    """Closed-form design of all M weight vectors for a fixed layout"""
    channel = fixed_array_channel(layout, geo, channel_mode)
    ring_size, desired_count = channel.eaves.shape[1], channel.desired.shape[1]
    if targets is None:
        targets = build_targets(spec, desired_count, ring_size)
    elif targets.eaves.shape[1] != ring_size or targets.desired.shape[1] != desired_count:
        raise DesignInputError("targets do not match the scenario's position counts")

    weights, solves = solve_weights(channel, targets, rcond=rcond, workers=workers)
    design = FixedArrayDesign.from_weights(layout, weights, channel, targets, channel_mode, solves, label)
    if "reduced" in design.solve_paths:
        log.warning("%s: KKT system numerically singular for %d of %d symbols; used the reduced solve "
                    "(rank %s, rcond %s), error norm %.6g above the untruncated fit by at most %.3g",
                    label, design.solve_paths.count("reduced"), len(solves), sorted(set(design.numerical_ranks)),
                    sorted({s.rcond for s in solves if s.rcond is not None}), design.error_norm,
                    float(design.objective_excess.max()))
    log.info("%s design: %d antennas, error norm %.6g, constraint residual %.3g",
             label, layout.count, design.error_norm, design.constraint_residual)
    return design
