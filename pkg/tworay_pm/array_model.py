"""
Array Model - antenna layouts and LOS / reflected steering matrices
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DesignInputError, GeometryError
from .geometry import TWO_PI, PathParams


@dataclass(frozen=True, eq=False)
class ArrayLayout:
    """Ordered antenna offsets from the reference element, in wavelengths"""

    offsets: np.ndarray
    # a subset of a larger array keeps its absolute positions
    thinned: bool = False

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=float).reshape(-1)
        if offsets.size < 1:
            raise DesignInputError("an array needs at least one antenna")
        if offsets[0] < 0:
            raise DesignInputError(f"antenna offsets must be non-negative, got {offsets[0]}")
        if offsets[0] != 0 and not self.thinned:
            raise DesignInputError(f"the reference antenna must sit at offset 0, got {offsets[0]}")
        if np.any(np.diff(offsets) <= 0):
            raise DesignInputError("antenna offsets must be strictly increasing")
        object.__setattr__(self, "offsets", offsets)

    @property
    def count(self) -> int:
        return int(self.offsets.size)

    @property
    def aperture(self) -> float:
        return float(self.offsets[-1] - self.offsets[0])

    @property
    def average_spacing(self) -> float | None:
        if self.count < 2:
            return None
        return self.aperture / (self.count - 1)

    def subset(self, indices) -> "ArrayLayout":
        """Surviving antennas; absolute positions are kept"""
        return ArrayLayout(self.offsets[np.asarray(indices, dtype=int)], thinned=True)


def uniform_layout(count: int, spacing: float) -> ArrayLayout:
    """Uniform linear array with element n at n * spacing"""
    if count < 1:
        raise DesignInputError(f"element count must be at least 1, got {count}")
    if not spacing > 0:
        raise DesignInputError(f"element spacing must be positive, got {spacing}")
    return ArrayLayout(np.arange(count) * float(spacing))


def steering_matrix(layout: ArrayLayout, angles) -> np.ndarray:
    """N x K matrix whose column k is the steering vector for angles[k]"""
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    return np.exp(1j * TWO_PI * np.outer(layout.offsets, np.sin(angles)))


def steering_vector(layout: ArrayLayout, angle: float) -> np.ndarray:
    """Entry n is exp(j 2pi d_n sin(angle))"""
    return steering_matrix(layout, [angle])[:, 0]


@dataclass(frozen=True, eq=False)
class SteeringSet:
    """LOS (theta) and reflected (zeta) steering matrices for desired and eavesdropper positions"""

    los_desired: np.ndarray
    los_eaves: np.ndarray
    reflected_desired: np.ndarray
    reflected_eaves: np.ndarray

    @property
    def desired_count(self) -> int:
        return self.los_desired.shape[1]

    @property
    def eaves_count(self) -> int:
        return self.los_eaves.shape[1]


def build_steering_set(layout: ArrayLayout, desired: PathParams,
                       ring: PathParams | Sequence[PathParams]) -> SteeringSet:
    """Steering matrices with eavesdropper columns in ring order, desired columns separate"""
    if not isinstance(ring, PathParams):
        ring = PathParams.concat(list(ring)) if len(ring) else None
    if ring is None or len(ring) == 0:
        raise GeometryError("at least one eavesdropper position is required")
    return SteeringSet(
        los_desired=steering_matrix(layout, desired.theta),
        los_eaves=steering_matrix(layout, ring.theta),
        reflected_desired=steering_matrix(layout, desired.zeta),
        reflected_eaves=steering_matrix(layout, ring.zeta),
    )
