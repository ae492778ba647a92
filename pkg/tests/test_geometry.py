import numpy as np
import pytest
from numpy.testing import assert_allclose

from tworay_pm.errors import GeometryError
from tworay_pm.geometry import (
    ScenarioGeometry, attenuations, desired_paths, eavesdropper_paths, phase_shifts,
    ring_angles_for_step, ring_paths,
)


def test_desired_paths_reference_scenario(reference_geometry):
    pp = desired_paths(reference_geometry)
    assert pp.theta[0] == 0.0
    assert_allclose(pp.zeta[0], np.pi / 4, rtol=1e-15)
    assert_allclose(pp.reflect_length[0], 1414.2136, atol=5e-5)
    assert_allclose(pp.reflect_length[0], np.hypot(1000.0, 1000.0), rtol=1e-12)
    assert pp.los_length[0] == 1000.0
    assert pp.los_attenuation[0] == 1.0
    assert_allclose(pp.reflect_attenuation[0], 0.70711, rtol=1e-5)


def test_eavesdropper_at_90_degrees(reference_geometry):
    pp = eavesdropper_paths(reference_geometry, np.deg2rad(90.0))
    assert_allclose(np.rad2deg(pp.theta[0]), 0.4813, atol=5e-5)
    assert_allclose(pp.theta[0], np.arctan(8.4 / 1000.0), rtol=1e-12)
    assert_allclose(pp.los_length[0], 1000.03528, rtol=1e-8)


def test_zero_radius_collapses_onto_desired(reference_geometry):
    geo = reference_geometry.with_radius(0.0)
    desired = desired_paths(geo)
    ring = eavesdropper_paths(geo, np.deg2rad([0.0, 37.0, 200.0]))
    assert len(ring) == 3
    for name in ("theta", "zeta", "los_length", "reflect_length", "los_phase", "reflect_phase",
                 "los_attenuation", "reflect_attenuation"):
        values = getattr(ring, name)
        assert np.all(values == getattr(desired, name)[0]), name
    assert ring.los_length[0] == geo.desired_range


def test_mirror_image_identity_over_random_geometries(rng):
    count = 1000
    H = rng.uniform(50.0, 1000.0, count)
    D1 = rng.uniform(500.0, 5000.0, count)
    h = rng.uniform(-0.4, 0.4, count) * H
    radius = rng.uniform(0.0, 20.0, count)
    eta = rng.uniform(0.0, 2 * np.pi, (count, 10))

    for i in range(count):
        geo = ScenarioGeometry(reflector_height=H[i], desired_range=D1[i], desired_height=h[i],
                               ring_radius=radius[i], ring_angles_deg=(0.0,))
        pp = eavesdropper_paths(geo, eta[i])
        h_hat = radius[i] * np.sin(eta[i])
        l_hat = radius[i] * np.cos(eta[i])
        mirror = np.hypot(geo.desired_projection + l_hat, 2 * H[i] - h[i] - h_hat)
        assert_allclose(pp.reflect_length, mirror, rtol=1e-9)


def test_ring_paths_are_continuous_in_the_ring_angle(reference_geometry):
    eta = np.deg2rad(np.arange(3601) * 0.1)
    pp = eavesdropper_paths(reference_geometry, eta)
    step = reference_geometry.ring_radius * np.deg2rad(0.1)
    # the closing sample at 360 degrees coincides with the first
    assert_allclose(pp.theta[-1], pp.theta[0], atol=1e-12)
    assert np.max(np.abs(np.diff(pp.theta))) < 2 * step / reference_geometry.desired_range
    assert np.max(np.abs(np.diff(pp.zeta))) < 2 * step / reference_geometry.desired_range
    assert np.max(np.abs(np.diff(pp.reflect_length))) <= step * (1 + 1e-9)
    assert np.max(np.abs(np.diff(pp.los_length))) <= step * (1 + 1e-9)


def test_phase_ranges_and_attenuation_ratios(reference_geometry):
    pp = ring_paths(reference_geometry)
    psi, phi = phase_shifts(pp)
    assert np.all((psi >= 0) & (psi < 2 * np.pi))
    assert np.all((phi >= np.pi) & (phi < 3 * np.pi))
    nu, xi = attenuations(reference_geometry, pp)
    assert np.array_equal(nu, reference_geometry.unity_power_distance / pp.los_length)
    assert np.array_equal(xi, reference_geometry.unity_power_distance / pp.reflect_length)
    assert np.all(pp.zeta > 0) and np.all(pp.zeta <= np.pi / 2)


def test_phase_is_remainder_of_path_length():
    geo = ScenarioGeometry(reflector_height=500.0, desired_range=1000.25, ring_angles_deg=(0.0,))
    pp = desired_paths(geo)
    assert_allclose(pp.los_phase[0], 2 * np.pi * 0.25, rtol=1e-9)


def test_ring_has_one_position_per_angle(reference_geometry):
    assert len(ring_paths(reference_geometry)) == 360
    assert len(ring_angles_for_step(7.0)) == 52
    assert ring_angles_for_step(90.0) == (0.0, 90.0, 180.0, 270.0)


def test_ring_radius_override(reference_geometry):
    assert_allclose(ring_paths(reference_geometry, 8.8).los_length[0], 1008.8, rtol=1e-12)


@pytest.mark.parametrize("kwargs", [
    dict(desired_range=10.0, desired_height=10.0),
    dict(desired_range=10.0, desired_height=-12.0),
])
def test_degenerate_desired_range_rejected(kwargs):
    with pytest.raises(GeometryError, match="D1"):
        desired_paths(ScenarioGeometry(**kwargs))


def test_receiver_above_mirror_plane_rejected():
    geo = ScenarioGeometry(reflector_height=4.0, ring_radius=8.4)
    with pytest.raises(GeometryError, match="mirror"):
        eavesdropper_paths(geo, np.deg2rad(90.0))


def test_receiver_behind_array_rejected():
    geo = ScenarioGeometry(desired_range=5.0, ring_radius=8.4)
    with pytest.raises(GeometryError, match="behind"):
        eavesdropper_paths(geo, np.pi)


def test_invalid_ring_step():
    with pytest.raises(GeometryError):
        ring_angles_for_step(0.0)
    with pytest.raises(GeometryError):
        ScenarioGeometry.with_ring_step(-1.0)


def test_validate_checks_scalars():
    with pytest.raises(GeometryError, match="unity-power"):
        ScenarioGeometry(unity_power_distance=0.0).validate()
    with pytest.raises(GeometryError, match="radius"):
        ScenarioGeometry(ring_radius=-1.0).validate()
    ScenarioGeometry().validate()
