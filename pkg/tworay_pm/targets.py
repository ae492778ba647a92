"""
Targets - constellation specs and desired responses per symbol and position
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DesignInputError
from .geometry import TWO_PI

RNG_ALGORITHM = "numpy.random.PCG64"


def make_rng(seed: int, *stream) -> np.random.Generator:
    """PCG64 generator for ``seed``; ``stream`` selects an independent child stream"""
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.PCG64(sequence))


def rng_metadata(seed: int) -> dict:
    return {"algorithm": RNG_ALGORITHM, "numpy": np.__version__, "seed": int(seed)}


@dataclass(frozen=True)
class ConstellationSpec:
    """Phase-only constellation with Gray bit labels"""

    symbol_phases: tuple[float, ...]
    bit_labels: tuple[str, ...]
    desired_magnitude: float = 1.0
    eaves_magnitude: float = 0.1
    rng_seed: int = 0

    def __post_init__(self):
        m = len(self.symbol_phases)
        if m < 2:
            raise DesignInputError(f"a constellation needs at least 2 symbols, got {m}")
        if len(self.bit_labels) != m:
            raise DesignInputError("one bit label is required per symbol")
        if len({len(label) for label in self.bit_labels}) != 1 or len(set(self.bit_labels)) != m:
            raise DesignInputError("bit labels must be distinct and of equal length")
        if not self.desired_magnitude > 0:
            raise DesignInputError(f"desired magnitude must be positive, got {self.desired_magnitude}")
        if not self.eaves_magnitude >= 0:
            raise DesignInputError(f"eavesdropper magnitude must be non-negative, got {self.eaves_magnitude}")
        wrapped = np.mod(np.asarray(self.symbol_phases), TWO_PI)
        gaps = np.abs(wrapped[:, None] - wrapped[None, :])
        gaps = np.minimum(gaps, TWO_PI - gaps)
        if np.any(gaps[~np.eye(m, dtype=bool)] < 1e-12):
            raise DesignInputError("symbol phases must be distinct modulo 2pi")

    @property
    def size(self) -> int:
        return len(self.symbol_phases)

    @property
    def bits_per_symbol(self) -> int:
        return len(self.bit_labels[0])

    @property
    def points(self) -> np.ndarray:
        """Nominal constellation points seen at the desired location"""
        return self.desired_magnitude * np.exp(1j * np.asarray(self.symbol_phases))

    @property
    def label_bits(self) -> np.ndarray:
        return np.array([[int(b) for b in label] for label in self.bit_labels], dtype=np.int8)


def qpsk_spec(seed: int = 0, desired_magnitude: float = 1.0,
              eaves_magnitude: float = 0.1) -> ConstellationSpec:
    """QPSK with 00, 01, 11, 10 at 45, 135, -135 and -45 degrees"""
    return ConstellationSpec(
        symbol_phases=tuple(np.deg2rad([45.0, 135.0, -135.0, -45.0]).tolist()),
        bit_labels=("00", "01", "11", "10"),
        desired_magnitude=desired_magnitude,
        eaves_magnitude=eaves_magnitude,
        rng_seed=seed,
    )


def mpsk_spec(symbol_count: int, seed: int = 0, desired_magnitude: float = 1.0,
              eaves_magnitude: float = 0.1) -> ConstellationSpec:
    """Gray-labelled M-PSK, symbol k at pi/M + 2pi k/M"""
    if symbol_count < 2 or symbol_count & (symbol_count - 1):
        raise DesignInputError(f"M-PSK needs a power-of-two symbol count, got {symbol_count}")
    width = int(np.log2(symbol_count))
    k = np.arange(symbol_count)
    phases = np.pi / symbol_count + TWO_PI * k / symbol_count
    phases = np.angle(np.exp(1j * phases))
    labels = tuple(format(int(g), f"0{width}b") for g in k ^ (k >> 1))
    return ConstellationSpec(tuple(phases.tolist()), labels, desired_magnitude, eaves_magnitude, seed)


@dataclass(frozen=True, eq=False)
class TargetResponses:
    """Required responses: desired (M x r) and eavesdropper (M x (R-r))"""

    desired: np.ndarray
    eaves: np.ndarray

    @property
    def symbol_count(self) -> int:
        return self.desired.shape[0]


def build_targets(spec: ConstellationSpec, desired_count: int, ring_size: int) -> TargetResponses:
    """Constellation at desired positions, scrambled low-magnitude values on the ring"""
    if desired_count < 1 or ring_size < 1:
        raise DesignInputError("desired and eavesdropper position counts must be at least 1")
    desired = np.repeat(spec.points[:, None], desired_count, axis=1)
    phases = make_rng(spec.rng_seed).uniform(0.0, TWO_PI, size=(spec.size, ring_size))
    eaves = spec.eaves_magnitude * np.exp(1j * phases)
    return TargetResponses(desired=desired, eaves=eaves)
