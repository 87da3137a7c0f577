import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phasemark.exceptions import ConfigError
from phasemark.imagecore import SensorSpec, degrade
from phasemark.patterngen import RenderPose, lattice_layout, render
from phasemark.phaseengine import analyze
from phasemark.pose import (
    Pose2D,
    Transform,
    compose,
    from_transform,
    inverse,
    normalize_angle,
    periods_to_physical,
    phase_uncertainty,
    relative_pose,
    signed_angle,
    to_transform,
)

coord = st.floats(-1e3, 1e3, allow_nan=False)
angle = st.floats(-20.0, 20.0, allow_nan=False)
poses = st.builds(Pose2D, coord, coord, angle)


def test_identity_pose_is_identity_matrix():
    assert np.array_equal(to_transform(Pose2D(0, 0, 0)).matrix, np.eye(3))


def test_quarter_turn_matrix():
    m = to_transform(Pose2D(1, 2, math.pi / 2)).matrix
    assert np.allclose(m, [[0, -1, 1], [1, 0, 2], [0, 0, 1]], atol=1e-15)


def test_inverse_composes_to_identity():
    p = Pose2D(3.5, -1.25, 2.2)
    m = (to_transform(p) @ to_transform(inverse(p))).matrix
    assert np.allclose(m, np.eye(3), atol=1e-12)


def test_relative_pose_examples():
    a = Pose2D(2.0, -3.0, 1.1)
    same = relative_pose(a, a)
    assert (same.x, same.y, same.signed_theta) == pytest.approx((0, 0, 0), abs=1e-12)
    r = relative_pose(Pose2D(0, 0, 0), Pose2D(3, 4, 0.1))
    assert (r.x, r.y, r.theta) == pytest.approx((3, 4, 0.1), abs=1e-12)
    r = relative_pose(Pose2D(1, 0, math.pi / 2), Pose2D(1, 1, math.pi / 2))
    assert (r.x, r.y, r.signed_theta) == pytest.approx((1, 0, 0), abs=1e-12)


def test_relative_angle_range():
    r = relative_pose(Pose2D(0, 0, 0.1), Pose2D(0, 0, 2 * math.pi - 0.1))
    assert r.theta == pytest.approx(2 * math.pi - 0.2)
    assert r.signed_theta == pytest.approx(-0.2)


def test_uncertainties_add_in_quadrature():
    a = Pose2D(0, 0, 0, sigma_xy=0.3, sigma_theta=0.004)
    b = Pose2D(1, 1, 1, sigma_xy=0.4, sigma_theta=0.003)
    r = relative_pose(a, b)
    assert r.sigma_xy == pytest.approx(0.5)
    assert r.sigma_theta == pytest.approx(0.005)
    assert compose(a, b).sigma_xy == pytest.approx(0.5)


def test_periods_to_physical_examples():
    p = periods_to_physical(Pose2D(10, 0, 0, sigma_xy=0.01, sigma_theta=0.002), 6.0)
    assert (p.x, p.y, p.theta) == (60.0, 0.0, 0.0)
    assert p.sigma_xy == pytest.approx(0.06)
    assert p.sigma_theta == 0.002
    q = Pose2D(1.5, -2.5, 0.7, 0.1, 0.2)
    assert periods_to_physical(q, 1.0) == q


def test_megarena_range_in_physical_units():
    # n = 10: three periods per code bit over 2**10 - 1 positions, 10 um pitch
    span_um = periods_to_physical(Pose2D(3 * 1023, 0, 0), 10.0).x
    assert span_um / 1000 == pytest.approx(30.69)


@pytest.mark.parametrize("period", [0.0, -1.0, float("nan"), float("inf")])
def test_invalid_period(period):
    with pytest.raises(ConfigError):
        periods_to_physical(Pose2D(1, 1, 0), period)


def test_pose_validation():
    with pytest.raises(ValueError):
        Pose2D(float("nan"), 0, 0)
    with pytest.raises(ValueError):
        Pose2D(0, 0, 0, sigma_xy=-1)
    assert Pose2D(0, 0, -0.5).theta == pytest.approx(2 * math.pi - 0.5)
    assert Pose2D(0, 0, -1e-18).theta == 0.0


def test_pose_dict():
    d = Pose2D(1, 2, 2 * math.pi - 0.1, 0.5, 0.25).as_dict(signed=True)
    assert d == pytest.approx({"x": 1, "y": 2, "theta": -0.1, "sigma_xy": 0.5, "sigma_theta": 0.25})


def test_transform_rejects_non_rigid():
    with pytest.raises(ValueError):
        Transform(np.diag([2.0, 1.0, 1.0]))
    with pytest.raises(ValueError):
        Transform(np.diag([1.0, -1.0, 1.0]))
    with pytest.raises(ValueError):
        Transform(np.eye(2))


def test_transform_apply_and_roundtrip():
    t = to_transform(Pose2D(1, 2, math.pi / 2))
    assert np.allclose(t.apply([[1, 0], [0, 1]]), [[1, 3], [0, 2]])
    p = from_transform(t)
    assert (p.x, p.y, p.theta) == pytest.approx((1, 2, math.pi / 2))


def test_angle_helpers():
    assert normalize_angle(2 * math.pi) == 0.0
    assert np.allclose(normalize_angle(np.array([-math.pi, 3 * math.pi])), [math.pi, math.pi])
    assert signed_angle(math.pi) == pytest.approx(math.pi)
    assert signed_angle(-math.pi) == pytest.approx(math.pi)
    assert signed_angle(1.5 * math.pi) == pytest.approx(-0.5 * math.pi)


@settings(max_examples=200, deadline=None)
@given(poses, poses)
def test_relative_then_compose_recovers_b(a, b):
    tb = (to_transform(a) @ to_transform(relative_pose(a, b))).matrix
    assert np.allclose(tb, to_transform(b).matrix, atol=1e-9, rtol=0)


@settings(max_examples=200, deadline=None)
@given(poses)
def test_emitted_angles_in_range(p):
    assert 0 <= p.theta < 2 * math.pi
    assert 0 <= inverse(p).theta < 2 * math.pi
    assert -math.pi < p.signed_theta <= math.pi


@settings(max_examples=200, deadline=None)
@given(poses, st.floats(1e-3, 1e3))
def test_scaling_leaves_angle(p, period):
    assert periods_to_physical(p, period).theta == p.theta


@settings(max_examples=200, deadline=None)
@given(poses, poses, poses)
def test_composition_is_associative(a, b, c):
    left = to_transform(compose(compose(a, b), c)).matrix
    right = to_transform(compose(a, compose(b, c))).matrix
    assert np.allclose(left, right, atol=1e-8, rtol=0)


def _lattice_phase(noise):
    layout = lattice_layout(60, 60, origin=(29.5, 29.5))
    img = render(layout, RenderPose(0.2, 0.1, 0.17, 10.0), 256)
    if noise:
        img = degrade(img, SensorSpec(bit_depth=16, gaussian_noise_sigma=noise), seed=1)
    return analyze(img)


def test_phase_uncertainty_grows_with_noise():
    quiet = phase_uncertainty(_lattice_phase(0.0))
    noisy = phase_uncertainty(_lattice_phase(0.1))
    assert all(v >= 0 and math.isfinite(v) for v in quiet + noisy)
    assert noisy[0] > quiet[0]
    assert noisy[1] > quiet[1]
    # a 25 x 25 period fit with a phase residual of a few tenths of a radian
    assert noisy[0] < 0.01
