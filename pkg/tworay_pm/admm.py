"""
ADMM - weighted group-norm minimisation over an l2 ball and affine equalities

Solves, for complex W (N x M) and positive group weights delta,

    minimize    sum_n delta_n ||W[n, :]||_2
    subject to  ||B W - Bt||_F <= radius
                C W = Ct

by over-relaxed ADMM on the splitting W = Z. The W-update is the Euclidean
projection onto the feasible set, computed exactly from one SVD of B restricted
to the null space of C and a scalar root search for the ball multiplier. The
Z-update is block soft thresholding. Every W iterate is feasible, and the
projection multiplier yields a dual point whose value bounds the optimum from
below, so the solver stops on a certified duality gap.

Complex entries are handled directly; a complex coordinate counts as two real
ones in every norm.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sl
from scipy import optimize

from .errors import ConvergenceError, InfeasibleError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdmmOptions:
    rho: float = 1.0
    relax: float = 1.6
    gap_tol: float = 1e-6
    max_iter: int = 50000
    # the certificate costs two extra products, so it is not evaluated every iteration
    check_every: int = 10
    # residual balancing, frozen after adapt_until iterations
    adapt_every: int = 10
    adapt_until: int = 5000
    balance: float = 10.0
    scale: float = 2.0
    log_every: int = 1000


@dataclass
class AdmmState:
    """Iterates kept for warm starts"""

    Z: np.ndarray
    Y: np.ndarray
    rho: float


@dataclass
class AdmmResult:
    W: np.ndarray
    Z: np.ndarray
    state: AdmmState
    iterations: int
    converged: bool
    objective: float
    dual_bound: float
    primal_residual: float
    dual_residual: float
    history: list = field(default_factory=list)

    @property
    def relative_gap(self) -> float:
        return (self.objective - self.dual_bound) / max(self.objective, 1e-300)


def group_shrink(X: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Row-wise block soft thresholding"""
    norms = np.linalg.norm(X, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > 0, np.maximum(0.0, 1.0 - thresholds / norms), 0.0)
    return X * scale[:, None]


def _inner(X, Y) -> float:
    return float(np.real(np.vdot(X, Y)))


def certificate_bound(B, Bt, C, Ct, radius: float, gamma: np.ndarray, lam: np.ndarray,
                      delta: np.ndarray) -> float:
    """Dual value of (gamma, lam), scaled until every group of B^H gamma + C^H lam is within delta_n

    Any pair gives a valid lower bound on the optimum after the scaling; the
    bound is tight at a primal-dual optimal pair.
    """
    D = B.conj().T @ gamma + C.conj().T @ lam
    excess = max(1.0, float(np.max(np.linalg.norm(D, axis=1) / delta)))
    value = -_inner(gamma, Bt) - radius * float(np.linalg.norm(gamma)) - _inner(lam, Ct)
    return value / excess


class FeasibleSetProjector:
    """Euclidean projection onto {W : C W = Ct, ||B W - Bt||_F <= radius}

    W is written as w0 + N z with w0 the minimum-norm solution of C W = Ct and
    N an orthonormal null-space basis of C. With G = B N = U diag(s) V^H the
    ball becomes ||diag(s) V^H z - U^H h||^2 + ||h_perp||^2 <= radius^2,
    h = Bt - B w0, and the projection multiplier solves a scalar secular
    equation in log space.
    """

    def __init__(self, B: np.ndarray, Bt: np.ndarray, C: np.ndarray, Ct: np.ndarray, radius: float):
        self.B, self.Bt, self.C, self.Ct = B, Bt, C, Ct
        self.radius = float(radius)
        self.w0 = sl.lstsq(C, Ct)[0]
        self.basis = sl.null_space(C)
        h = Bt - B @ self.w0
        if self.basis.shape[1] > 0:
            G = B @ self.basis
            U, s, Vh = sl.svd(G, full_matrices=False)
            keep = s > (s[0] if s.size else 0.0) * max(G.shape) * np.finfo(float).eps
            self.U, self.sigma, self.Vh = U[:, keep], s[keep], Vh[keep]
        else:
            self.U = np.zeros((B.shape[0], 0), dtype=complex)
            self.sigma = np.zeros(0)
            self.Vh = np.zeros((0, 0), dtype=complex)
        self.b = self.U.conj().T @ h
        # smallest mismatch any equality-feasible W reaches
        self.floor = float(np.linalg.norm(h - self.U @ self.b))
        self._C_pinv_h = np.linalg.pinv(C.conj().T)
        self._log_multiplier = 0.0

    @property
    def feasible(self) -> bool:
        return self.floor < self.radius

    def _multiplier(self, energy: np.ndarray, budget: float) -> float:
        s2 = self.sigma ** 2

        def excess(t):
            with np.errstate(over="ignore"):
                return float(np.sum(energy / (1.0 + np.exp(t) * s2) ** 2)) - budget

        lo = hi = self._log_multiplier
        while excess(lo) <= 0.0 and lo > -700.0:
            lo -= 4.0
        while excess(hi) > 0.0 and hi < 700.0:
            hi += 4.0
        t = optimize.brentq(excess, lo, hi, xtol=1e-13, maxiter=200)
        self._log_multiplier = t
        return float(np.exp(t))

    def project(self, V: np.ndarray) -> tuple[np.ndarray, float]:
        """(projection of V, ball multiplier lambda >= 0)"""
        budget = self.radius ** 2 - self.floor ** 2
        if budget <= 0.0:
            raise InfeasibleError(f"radius {self.radius:.6g} does not exceed the reachable mismatch",
                                  min_residual=self.floor)
        if self.basis.shape[1] == 0:
            return self.w0.copy(), 0.0

        z0 = self.basis.conj().T @ V
        a = self.Vh @ z0
        s = self.sigma[:, None]
        residual = s * a - self.b
        energy = np.sum(np.abs(residual) ** 2, axis=1)
        if energy.sum() <= budget:
            return self.w0 + self.basis @ z0, 0.0

        lam = self._multiplier(energy, budget)
        step = (a + lam * s * self.b) / (1.0 + lam * s * s) - a
        z = z0 + self.Vh.conj().T @ step
        return self.w0 + self.basis @ z, lam

    def dual_bound(self, V: np.ndarray, W: np.ndarray, lam: float, rho: float, delta: np.ndarray) -> float:
        """Lower bound from the multipliers of the projection W = P(V)

        rho (V - W) = B^H gamma + C^H Lambda with gamma = rho lam (B W - Bt);
        Lambda is recovered by least squares against C^H.
        """
        gamma = rho * lam * (self.B @ W - self.Bt)
        lam_eq = self._C_pinv_h @ (rho * (V - W) - self.B.conj().T @ gamma)
        return certificate_bound(self.B, self.Bt, self.C, self.Ct, self.radius, gamma, lam_eq, delta)


class GroupBallAdmm:
    """ADMM for one problem instance; reusable across group weights"""

    def __init__(self, B: np.ndarray, Bt: np.ndarray, C: np.ndarray, Ct: np.ndarray, radius: float):
        self.projector = FeasibleSetProjector(B, Bt, C, Ct, radius)
        self.n = B.shape[1]

    def initial_state(self, W0: np.ndarray, rho: float) -> AdmmState:
        return AdmmState(Z=np.array(W0, dtype=complex), Y=np.zeros_like(W0, dtype=complex), rho=rho)

    def solve(self, delta: np.ndarray, options: AdmmOptions, warm: AdmmState) -> AdmmResult:
        Z, Y, rho = warm.Z, warm.Y, warm.rho
        size = np.sqrt(Z.size)
        history = []
        r_norm = s_norm = gap = np.inf
        objective = bound = float("nan")

        for k in range(1, options.max_iter + 1):
            V = Z - Y
            W, lam = self.projector.project(V)
            W_hat = options.relax * W + (1.0 - options.relax) * Z

            Z_old = Z
            Z = group_shrink(W_hat + Y, delta / rho)
            Y = Y + W_hat - Z

            r_norm = float(np.linalg.norm(W - Z))
            s_norm = float(rho * np.linalg.norm(Z - Z_old))

            certify = k % options.check_every == 0
            report = k % options.log_every == 0
            if certify or report or k == options.max_iter:
                objective = float(delta @ np.linalg.norm(W, axis=1))
                bound = self.projector.dual_bound(V, W, lam, rho, delta)
                gap = (objective - bound) / max(objective, 1e-300)
                if report:
                    history.append((k, objective, bound, r_norm, s_norm, rho))
                    log.debug("admm %6d  obj %.10g  bound %.10g  gap %.2e  r %.3e  s %.3e  rho %.3g",
                              k, objective, bound, gap, r_norm, s_norm, rho)
                if gap <= options.gap_tol:
                    state = AdmmState(Z, Y, rho)
                    return AdmmResult(W, Z, state, k, True, objective, bound, r_norm, s_norm, history)

            if k % options.adapt_every == 0 and k <= options.adapt_until:
                if r_norm > options.balance * s_norm and r_norm > size * 1e-15:
                    rho *= options.scale
                    Y = Y / options.scale
                elif s_norm > options.balance * r_norm and s_norm > size * 1e-15:
                    rho /= options.scale
                    Y = Y * options.scale

        raise ConvergenceError(
            f"ADMM did not reach a relative duality gap of {options.gap_tol:.1e} in {options.max_iter} "
            f"iterations (gap {gap:.3e}, primal residual {r_norm:.3e}, dual residual {s_norm:.3e})",
            trace=history,
        )
