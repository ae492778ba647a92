"""
BER Simulation - Monte Carlo bit error rates at the desired receiver and on eavesdropper rings

Noise is complex AWGN with one variance for every position, calibrated to the
SNR at the desired receiver. Every receiver detects by minimum distance to the
nominal constellation and counts Gray-coded bit errors.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, stats

from .array_model import ArrayLayout, steering_matrix
from .closed_form import CHANNEL_MODES, LOS_ONLY, TWO_RAY
from .errors import DesignInputError
from .geometry import PathParams, ScenarioGeometry, desired_paths, ring_paths
from .targets import ConstellationSpec, make_rng

log = logging.getLogger(__name__)

DESIRED_STREAM = 0
RING_STREAM = 1
LOS_STREAM = 2


@dataclass(frozen=True)
class BerConfig:
    snr_db: float = 12.0
    trials: int = 10**6
    desired_trials: int = 10**7
    channel_mode: str = TWO_RAY
    eval_radii: tuple[float, ...] = (8.0, 8.4, 8.8)
    rng_seed: int = 0
    workers: int = 1
    chunk_size: int = 2**18
    confidence: float = 0.99

    def __post_init__(self):
        if not np.isfinite(self.snr_db):
            raise DesignInputError(f"snr_db must be finite, got {self.snr_db}")
        if self.trials < 1 or self.desired_trials < 1:
            raise DesignInputError("trial counts must be at least 1")
        if self.channel_mode not in CHANNEL_MODES:
            raise DesignInputError(f"unknown channel mode '{self.channel_mode}'")
        if self.workers < 1 or self.chunk_size < 1:
            raise DesignInputError("workers and chunk_size must be at least 1")
        if not 0 < self.confidence < 1:
            raise DesignInputError(f"confidence must lie in (0, 1), got {self.confidence}")


@dataclass(frozen=True)
class BerPoint:
    radius: float
    eta_deg: float
    trials: int
    bit_errors: int
    bits_per_symbol: int
    channel_mode: str
    confidence: float = 0.99

    @property
    def ber(self) -> float:
        return self.bit_errors / (self.trials * self.bits_per_symbol)

    @property
    def ci_halfwidth(self) -> float:
        return wilson_halfwidth(self.bit_errors, self.trials * self.bits_per_symbol, self.confidence)

    def row(self) -> tuple:
        return (self.radius, self.eta_deg, self.trials, self.bit_errors, self.ber, self.ci_halfwidth,
                self.channel_mode)


@dataclass
class BerCurve:
    """One ring of eavesdropper positions"""

    radius: float
    channel_mode: str
    points: list[BerPoint] = field(default_factory=list)

    @property
    def ber(self) -> np.ndarray:
        return np.array([p.ber for p in self.points])

    @property
    def eta_deg(self) -> np.ndarray:
        return np.array([p.eta_deg for p in self.points])


@dataclass
class BerSweep:
    """Desired-location estimate plus one curve per evaluation radius"""

    label: str
    desired: BerPoint
    curves: list[BerCurve]
    noise_variance: float

    def rows(self) -> list[tuple]:
        # The desired receiver is reported as radius 0
        return [self.desired.row()] + [p.row() for curve in self.curves for p in curve.points]


BER_COLUMNS = ("radius", "eta_deg", "trials", "bit_errors", "ber", "ci_halfwidth", "channel_mode")


def path_gains(pp: PathParams, channel_mode: str = TWO_RAY) -> tuple[np.ndarray, np.ndarray]:
    """(nu e^{j psi}, xi e^{j phi}) per position; the reflected gain is zero in los-only mode"""
    if channel_mode not in CHANNEL_MODES:
        raise DesignInputError(f"unknown channel mode '{channel_mode}'")
    los = pp.los_attenuation * np.exp(1j * pp.los_phase)
    reflect = pp.reflect_attenuation * np.exp(1j * pp.reflect_phase)
    if channel_mode == LOS_ONLY:
        reflect = np.zeros_like(reflect)
    return los, reflect


def _weights(W) -> np.ndarray:
    return np.asarray(getattr(W, "weights", W))


def received_values(W, layout: ArrayLayout, pp: PathParams, channel_mode: str = TWO_RAY) -> np.ndarray:
    """M x K noiseless received values for every symbol and position"""
    w_h = _weights(W).conj().T
    los, reflect = path_gains(pp, channel_mode)
    return (w_h @ steering_matrix(layout, pp.theta)) * los + (w_h @ steering_matrix(layout, pp.zeta)) * reflect


def received_value(W, layout: ArrayLayout, point: PathParams | ScenarioGeometry, m: int,
                   channel_mode: str = TWO_RAY) -> complex:
    """Noiseless response to symbol m at one position (a geometry means its desired receiver)"""
    if isinstance(point, ScenarioGeometry):
        point = desired_paths(point)
    return complex(received_values(_weights(W)[:, [m]], layout, point.take(0), channel_mode)[0, 0])


def noise_sigma(snr_db: float, reference_magnitude: float) -> float:
    """Total complex noise variance; each real dimension gets half"""
    if not reference_magnitude > 0:
        raise DesignInputError(f"reference magnitude must be positive, got {reference_magnitude}")
    return float(reference_magnitude**2 * 10.0 ** (-snr_db / 10.0))


def wilson_halfwidth(errors: int, n: int, confidence: float = 0.99) -> float:
    """Half-width of the Wilson score interval for errors out of n"""
    if n < 1:
        return float("nan")
    z = stats.norm.ppf(0.5 + confidence / 2.0)
    p = errors / n
    return float(z / (1.0 + z * z / n) * np.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)))


def hamming_table(spec: ConstellationSpec) -> np.ndarray:
    """M x M bit differences between labels"""
    bits = spec.label_bits
    return (bits[:, None, :] != bits[None, :, :]).sum(axis=2)


def detect(samples: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Minimum-distance decisions"""
    return np.argmin(np.abs(samples[:, None] - points[None, :]), axis=1)


def _sectors(spec: ConstellationSpec) -> list[tuple[float, float]]:
    # Equal-magnitude points: min-distance regions are angular sectors between bisectors
    phases = np.mod(np.asarray(spec.symbol_phases), 2 * np.pi)
    order = np.argsort(phases)
    sorted_phases = phases[order]
    nxt = np.append(sorted_phases[1:], sorted_phases[0] + 2 * np.pi)
    prv = np.insert(sorted_phases[:-1], 0, sorted_phases[-1] - 2 * np.pi)
    bounds = [None] * spec.size
    for i, idx in enumerate(order):
        bounds[idx] = ((prv[i] + sorted_phases[i]) / 2.0, (sorted_phases[i] + nxt[i]) / 2.0)
    return bounds


def predicted_ber(spec: ConstellationSpec, received: np.ndarray, sigma2: float) -> float:
    """Minimum-distance BER for uniformly drawn symbols received at ``received`` plus AWGN

    Integrates the complex Gaussian density over every wrong decision sector.
    """
    received = np.asarray(received, dtype=complex)
    sectors = _sectors(spec)
    hamming = hamming_table(spec)
    total = 0.0
    # The density is negligible beyond 12 standard deviations
    r_max = float(np.max(np.abs(received))) + 12.0 * np.sqrt(sigma2)
    for m, y in enumerate(received):
        def density(r, phi, y=y):
            z = r * np.exp(1j * phi)
            return r * np.exp(-abs(z - y) ** 2 / sigma2) / (np.pi * sigma2)

        for j, (lo, hi) in enumerate(sectors):
            if j == m or hamming[m, j] == 0:
                continue
            prob, _ = integrate.dblquad(density, lo, hi, 0.0, r_max, epsabs=1e-13, epsrel=1e-9)
            total += hamming[m, j] * prob
    return total / (spec.size * spec.bits_per_symbol)


def count_bit_errors(received: np.ndarray, spec: ConstellationSpec, sigma2: float, trials: int,
                     seed: int, stream: tuple, chunk_size: int = 2**18) -> int:
    """Bit errors over ``trials`` uniformly drawn symbols at one position

    Trials are split into partitions of ``chunk_size``; partition p draws from
    its own stream (seed, *stream, p), so the count does not depend on how
    partitions are scheduled.
    """
    points = spec.points
    hamming = hamming_table(spec)
    scale = np.sqrt(sigma2 / 2.0)
    errors = 0
    for part, start in enumerate(range(0, trials, chunk_size)):
        n = min(chunk_size, trials - start)
        rng = make_rng(seed, *stream, part)
        symbols = rng.integers(0, spec.size, size=n)
        noise = scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        decided = detect(received[symbols] + noise, points)
        errors += int(hamming[symbols, decided].sum())
    return errors


def _map(fn, jobs, workers):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(job) for job in jobs]


def run_ber(W, layout: ArrayLayout, geo: ScenarioGeometry, spec: ConstellationSpec, cfg: BerConfig, *,
            stream: int = RING_STREAM, label: str | None = None) -> BerSweep:
    """BER at the desired receiver and on every ring of cfg.eval_radii"""
    mode = cfg.channel_mode
    sigma2 = noise_sigma(cfg.snr_db, spec.desired_magnitude)
    k = spec.bits_per_symbol

    desired_rx = received_values(W, layout, desired_paths(geo), mode)[:, 0]
    desired_errors = count_bit_errors(desired_rx, spec, sigma2, cfg.desired_trials, cfg.rng_seed,
                                      (DESIRED_STREAM, stream), cfg.chunk_size)
    desired = BerPoint(0.0, 0.0, cfg.desired_trials, desired_errors, k, mode, cfg.confidence)
    log.info("desired receiver (%s): BER %.3e over %d trials", mode, desired.ber, cfg.desired_trials)

    curves = []
    for i, radius in enumerate(cfg.eval_radii):
        received = received_values(W, layout, ring_paths(geo, radius), mode)
        jobs = list(enumerate(geo.ring_angles_deg))

        def evaluate(job, i=i, received=received):
            j, eta = job
            errors = count_bit_errors(received[:, j], spec, sigma2, cfg.trials, cfg.rng_seed,
                                      (stream, i, j), cfg.chunk_size)
            return BerPoint(float(radius), float(eta), cfg.trials, errors, k, mode, cfg.confidence)

        curve = BerCurve(float(radius), mode, _map(evaluate, jobs, cfg.workers))
        log.info("ring radius %g (%s): BER from %.3e to %.3e", radius, mode, curve.ber.min(), curve.ber.max())
        curves.append(curve)

    return BerSweep(label or mode, desired, curves, sigma2)


def los_comparison(W_los, layout: ArrayLayout, geo: ScenarioGeometry, spec: ConstellationSpec,
                   cfg: BerConfig, *, label: str = "los-redesign") -> BerSweep:
    """BER of ``W_los`` in a channel without the reflected path"""
    return run_ber(W_los, layout, geo, spec, replace(cfg, channel_mode=LOS_ONLY), stream=LOS_STREAM, label=label)
