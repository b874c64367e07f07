import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dirdp import sphere


def test_normalize_hand_value():
    np.testing.assert_allclose(sphere.normalize([3.0, 4.0]), [0.6, 0.8], rtol=1e-15)


def test_normalize_idempotent_on_unit():
    u = sphere.normalize(np.random.default_rng(0).standard_normal(9))
    np.testing.assert_allclose(sphere.normalize(u), u, rtol=1e-15)


def test_normalize_output_unit():
    gen = np.random.default_rng(1)
    for _ in range(100):
        v = gen.standard_normal(17) * gen.uniform(1e-6, 1e6)
        assert abs(np.linalg.norm(sphere.normalize(v)) - 1.0) <= 1e-12


def test_normalize_zero_raises():
    with pytest.raises(ValueError):
        sphere.normalize(np.zeros(5))


def test_angular_distance_trivials():
    e1 = np.array([1.0, 0.0])
    e2 = np.array([0.0, 1.0])
    assert sphere.angular_distance(e1, e1) == 0.0
    assert sphere.angular_distance(e1, e2) == pytest.approx(np.pi / 2, rel=1e-15)
    assert sphere.angular_distance(e1, -e1) == pytest.approx(np.pi, rel=1e-15)


def test_angular_distance_clamps_rounding():
    # a dot product can land at 1 + ulp; arccos must not produce NaN
    v = sphere.normalize(np.array([1.0, 1e-8, 1e-8]))
    assert np.isfinite(sphere.angular_distance(v, v.copy()))


def test_angular_distance_metric_properties():
    gen = np.random.default_rng(2)
    for _ in range(10_000):
        a, b, c = (sphere.normalize(gen.standard_normal(4)) for _ in range(3))
        dab = sphere.angular_distance(a, b)
        assert dab == sphere.angular_distance(b, a)
        assert dab <= sphere.angular_distance(a, c) + sphere.angular_distance(c, b) + 1e-9


def test_angular_distance_zero_iff_equal():
    gen = np.random.default_rng(3)
    u = sphere.normalize(gen.standard_normal(6))
    assert sphere.angular_distance(u, u) <= 1e-9
    v = sphere.normalize(u + 0.01 * gen.standard_normal(6))
    assert sphere.angular_distance(u, v) > 1e-4


def test_pole_rotation_identity_when_mu_is_pole():
    e1 = np.zeros(5)
    e1[0] = 1.0
    x = sphere.normalize(np.random.default_rng(4).standard_normal(5))
    np.testing.assert_array_equal(sphere.pole_rotation_apply(e1, x), x)


def test_pole_rotation_maps_pole_to_mu():
    gen = np.random.default_rng(5)
    mu = sphere.normalize(gen.standard_normal(8))
    e1 = np.zeros(8)
    e1[0] = 1.0
    np.testing.assert_allclose(sphere.pole_rotation_apply(mu, e1), mu, atol=1e-12)


def test_pole_rotation_is_isometry():
    gen = np.random.default_rng(6)
    e1 = np.zeros(12)
    e1[0] = 1.0
    for _ in range(200):
        mu = sphere.normalize(gen.standard_normal(12))
        x = sphere.normalize(gen.standard_normal(12))
        y = sphere.pole_rotation_apply(mu, x)
        assert abs(np.linalg.norm(y) - 1.0) <= 1e-9
        assert sphere.angular_distance(e1, x) == pytest.approx(
            sphere.angular_distance(mu, y), abs=1e-9)


def test_pole_rotation_preserves_pairwise_angles():
    gen = np.random.default_rng(7)
    mu = sphere.normalize(gen.standard_normal(10))
    x1 = sphere.normalize(gen.standard_normal(10))
    x2 = sphere.normalize(gen.standard_normal(10))
    y1 = sphere.pole_rotation_apply(mu, x1)
    y2 = sphere.pole_rotation_apply(mu, x2)
    assert sphere.angular_distance(x1, x2) == pytest.approx(
        sphere.angular_distance(y1, y2), abs=1e-9)


def test_pole_rotation_dimension_mismatch():
    with pytest.raises(ValueError):
        sphere.pole_rotation_apply(np.ones(3) / np.sqrt(3), np.ones(4) / 2.0)


def test_random_unit_is_unit_and_deterministic():
    a = sphere.random_unit(33, np.random.default_rng(8))
    b = sphere.random_unit(33, np.random.default_rng(8))
    assert abs(np.linalg.norm(a) - 1.0) <= 1e-12
    np.testing.assert_array_equal(a, b)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2**32 - 1))
def test_rotation_isometry_property(dim, seed):
    gen = np.random.default_rng(seed)
    mu = sphere.normalize(gen.standard_normal(dim))
    x = sphere.normalize(gen.standard_normal(dim))
    y = sphere.pole_rotation_apply(mu, x)
    e1 = np.zeros(dim)
    e1[0] = 1.0
    assert abs(np.linalg.norm(y) - 1.0) <= 1e-9
    assert abs(sphere.angular_distance(e1, x) - sphere.angular_distance(mu, y)) <= 1e-9
