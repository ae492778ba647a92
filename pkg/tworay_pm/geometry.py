"""
Geometry - two-ray angles, path lengths, phase shifts and attenuations

All lengths are in carrier wavelengths and all angles in radians, except the
ring angles kept on ScenarioGeometry, which are degrees as read from the config.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import GeometryError

TWO_PI = 2.0 * np.pi


def ring_angles_for_step(step_deg: float) -> tuple[float, ...]:
    """Ring angles in [0, 360) degrees sampled every ``step_deg``"""
    if not step_deg > 0:
        raise GeometryError(f"ring step must be positive, got {step_deg}")
    count = int(np.ceil(360.0 / step_deg - 1e-9))
    return tuple(float(k * step_deg) for k in range(count))


@dataclass(frozen=True)
class ScenarioGeometry:
    """Reflector, desired receiver and eavesdropper ring of the two-ray model"""

    reflector_height: float = 500.0
    desired_range: float = 1000.0
    desired_height: float = 0.0
    unity_power_distance: float = 1000.0
    ring_radius: float = 8.4
    ring_angles_deg: tuple[float, ...] = field(default_factory=lambda: ring_angles_for_step(1.0))

    @classmethod
    def with_ring_step(cls, step_deg: float, **kwargs) -> "ScenarioGeometry":
        return cls(ring_angles_deg=ring_angles_for_step(step_deg), **kwargs)

    @property
    def desired_projection(self) -> float:
        """D2, the projection of the desired range onto broadside"""
        d1, h = self.desired_range, self.desired_height
        if not d1 > abs(h):
            raise GeometryError(
                f"desired range D1={d1} must exceed |h|={abs(h)}; "
                "the receiver would not lie in front of the array"
            )
        return float(np.sqrt(d1 * d1 - h * h))

    @property
    def ring_angles(self) -> np.ndarray:
        return np.deg2rad(np.asarray(self.ring_angles_deg, dtype=float))

    def with_radius(self, radius: float) -> "ScenarioGeometry":
        return replace(self, ring_radius=float(radius))

    def validate(self) -> None:
        """Check every invariant, including all ring positions"""
        if not self.reflector_height > 0:
            raise GeometryError(f"reflector height H must be positive, got {self.reflector_height}")
        if not self.unity_power_distance > 0:
            raise GeometryError(f"unity-power distance D must be positive, got {self.unity_power_distance}")
        if not self.ring_radius >= 0:
            raise GeometryError(f"ring radius must be non-negative, got {self.ring_radius}")
        if not self.ring_angles_deg:
            raise GeometryError("eavesdropper ring has no angles")
        desired_paths(self)
        ring_paths(self)


@dataclass(frozen=True, eq=False)
class PathParams:
    """Per-position LOS and reflected path quantities, one array entry per position"""

    theta: np.ndarray
    zeta: np.ndarray
    los_length: np.ndarray
    reflect_before: np.ndarray
    reflect_after: np.ndarray
    los_phase: np.ndarray
    reflect_phase: np.ndarray
    los_attenuation: np.ndarray
    reflect_attenuation: np.ndarray

    @property
    def reflect_length(self) -> np.ndarray:
        return self.reflect_before + self.reflect_after

    def __len__(self) -> int:
        return int(np.size(self.theta))

    def take(self, index) -> "PathParams":
        """Positions selected by an index or index array"""
        return PathParams(**{
            name: np.atleast_1d(np.asarray(getattr(self, name))[index])
            for name in _PATH_FIELDS
        })

    @classmethod
    def concat(cls, parts: Sequence["PathParams"]) -> "PathParams":
        if not parts:
            raise GeometryError("no path sets to concatenate")
        return cls(**{
            name: np.concatenate([np.atleast_1d(getattr(p, name)) for p in parts])
            for name in _PATH_FIELDS
        })


_PATH_FIELDS = (
    "theta", "zeta", "los_length", "reflect_before", "reflect_after",
    "los_phase", "reflect_phase", "los_attenuation", "reflect_attenuation",
)


def _remainder(length):
    # Non-negative remainder of a length in wavelengths
    return np.mod(length, 1.0)


def phase_shifts(pp: PathParams) -> tuple[np.ndarray, np.ndarray]:
    """LOS phase in [0, 2pi) and reflected phase in [pi, 3pi) from the path lengths"""
    psi = TWO_PI * _remainder(pp.los_length)
    phi = np.pi + TWO_PI * _remainder(pp.reflect_length)
    return psi, phi


def attenuations(geo: ScenarioGeometry, pp: PathParams) -> tuple[np.ndarray, np.ndarray]:
    """Attenuation ratios relative to the unity-power distance"""
    d = geo.unity_power_distance
    return d / pp.los_length, d / pp.reflect_length


def _paths(geo: ScenarioGeometry, h_hat, l_hat) -> PathParams:
    d2 = geo.desired_projection
    big_h, h = geo.reflector_height, geo.desired_height

    forward = d2 + l_hat
    los_rise = h + h_hat
    mirror_rise = 2.0 * big_h - h - h_hat
    if np.any(forward <= 0):
        raise GeometryError("an eavesdropper lies behind the array plane (D2 + l_hat <= 0)")
    if np.any(mirror_rise <= 0):
        raise GeometryError("an eavesdropper lies beyond the mirror plane (2H - h - h_hat <= 0)")

    theta = np.arctan(los_rise / forward)
    zeta = np.arctan(mirror_rise / forward)
    sin_zeta = np.sin(zeta)
    pp = PathParams(
        theta=np.atleast_1d(theta),
        zeta=np.atleast_1d(zeta),
        los_length=np.atleast_1d(np.hypot(forward, los_rise)),
        reflect_before=np.atleast_1d(big_h / sin_zeta),
        reflect_after=np.atleast_1d((big_h - h - h_hat) / sin_zeta),
        los_phase=np.zeros(np.size(theta)),
        reflect_phase=np.zeros(np.size(theta)),
        los_attenuation=np.zeros(np.size(theta)),
        reflect_attenuation=np.zeros(np.size(theta)),
    )
    psi, phi = phase_shifts(pp)
    nu, xi = attenuations(geo, pp)
    return replace(pp, los_phase=psi, reflect_phase=phi, los_attenuation=nu, reflect_attenuation=xi)


def desired_paths(geo: ScenarioGeometry) -> PathParams:
    """Paths to the desired receiver (h_hat = l_hat = 0, so D3 = D1)"""
    paths = _paths(geo, 0.0, 0.0)
    # D3 collapses to D1 exactly rather than through hypot rounding
    los = np.array([geo.desired_range])
    pp = replace(paths, los_length=los)
    psi, _ = phase_shifts(pp)
    nu, _ = attenuations(geo, pp)
    return replace(pp, los_phase=psi, los_attenuation=nu)


def eavesdropper_paths(geo: ScenarioGeometry, eta, radius: float | None = None) -> PathParams:
    """Paths to ring positions at angle(s) ``eta`` (radians) around the desired receiver"""
    r_bar = geo.ring_radius if radius is None else float(radius)
    eta = np.asarray(eta, dtype=float)
    if r_bar == 0.0:
        # The ring degenerates onto the desired receiver
        base = desired_paths(geo)
        return base.take(np.zeros(max(eta.size, 1), dtype=int))
    return _paths(geo, r_bar * np.sin(eta), r_bar * np.cos(eta))


def ring_paths(geo: ScenarioGeometry, radius: float | None = None) -> PathParams:
    """Paths to every ring position, in increasing ring-angle order"""
    if not geo.ring_angles_deg:
        raise GeometryError("eavesdropper ring has no angles")
    return eavesdropper_paths(geo, geo.ring_angles, radius)
