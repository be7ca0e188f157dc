import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from distdiff.geometry import (NonUniqueProjectionError, PointCloud, Sphere, diameter, grad_half_sq_distance,
                               smoothed_sq_distance)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def clouds(max_m=20, max_n=5):
    return st.integers(1, max_n).flatmap(
        lambda n: st.tuples(arrays(float, st.tuples(st.integers(1, max_m), st.just(n)), elements=finite),
                            arrays(float, (n,), elements=finite)))


@given(clouds())
def test_distance_is_min_and_projection_attains_it(data):
    pts, x = data
    K = PointCloud(pts)
    d = K.distance(x)
    assert d == pytest.approx(min(np.linalg.norm(p - x) for p in pts), abs=1e-12)
    res = K.project(x)
    assert np.linalg.norm(res.nearest - x) == pytest.approx(d, abs=1e-12)
    assert any(np.array_equal(res.nearest, p) for p in pts)


@given(clouds())
def test_distance_is_one_lipschitz(data):
    pts, x = data
    K = PointCloud(pts)
    y = x + 0.37
    assert abs(K.distance(x) - K.distance(y)) <= np.linalg.norm(x - y) + 1e-9


@given(clouds())
def test_distance_zero_on_set(data):
    pts, _ = data
    K = PointCloud(pts)
    assert K.distance(pts[0]) == 0.0


def test_tie_reports_lowest_index():
    K = PointCloud([[1.0, 0.0], [-1.0, 0.0]])
    res = K.project([0.0, 0.5])
    assert res.tie and res.index == 0
    with pytest.raises(NonUniqueProjectionError):
        grad_half_sq_distance([0.0, 0.5], K)


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError, match="dimension"):
        PointCloud([[0.0, 0.0]]).distance([1.0, 2.0, 3.0])


def test_rejects_empty_and_nonfinite():
    with pytest.raises(ValueError):
        PointCloud(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        PointCloud([[np.nan, 1.0]])


def test_grad_matches_finite_differences():
    rng = np.random.default_rng(1)
    K = PointCloud(rng.standard_normal((15, 4)))
    x = rng.standard_normal(4) * 2
    h = 1e-6
    fd = np.array([(0.5 * K.distance(x + h * e) ** 2 - 0.5 * K.distance(x - h * e) ** 2) / (2 * h) for e in np.eye(4)])
    assert np.allclose(fd, grad_half_sq_distance(x, K), atol=1e-7)


def test_sphere_distance_and_projection():
    S = Sphere.coordinate(5, 2, radius=2.0)  # 2-sphere in the first 3 coordinates
    x = np.array([3.0, 0.0, 0.0, 4.0, 0.0])
    # in-span radius 3 -> radial gap 1, orthogonal part 4
    assert S.distance(x) == pytest.approx(math.hypot(1.0, 4.0))
    res = S.project(x)
    assert np.allclose(res.nearest, [2.0, 0, 0, 0, 0])
    assert S.reach == 2.0 and S.intrinsic_dim == 2 and S.diameter == 4.0


def test_circle_uses_plane_and_orthogonal_part():
    C = Sphere.circle(4, radius=1.0, center=[1.0, 1.0, 0.0, 0.0])
    x = np.array([1.0 + 3.0, 1.0, 2.0, 0.0])
    assert C.distance(x) == pytest.approx(math.hypot(2.0, 2.0))


def test_sphere_axis_is_a_tie():
    S = Sphere.coordinate(4, 1)
    with pytest.raises(NonUniqueProjectionError):
        S.project([0.0, 0.0, 1.0, 1.0])


def test_sphere_distance_vectorized_matches_scalar():
    S = Sphere.coordinate(6, 3, 1.5)
    X = np.random.default_rng(0).standard_normal((7, 6))
    assert np.allclose(S.distance(X), [S.distance(x) for x in X])


def test_sphere_samples_on_sphere():
    S = Sphere.coordinate(10, 4, 3.0)
    pts = S.sample(100, np.random.default_rng(0))
    assert np.abs(S.distance(pts)).max() < 1e-12


@pytest.mark.parametrize("sigma", [1.0, 0.1, 0.01])
def test_smoothed_below_exact(sigma):
    K = PointCloud([[0.0, 0.0], [1.0, 0.0]])
    x = [0.3, 0.4]
    assert smoothed_sq_distance(x, K, sigma) <= K.distance(x) ** 2 + 1e-15


def test_smoothed_approaches_min_monotonically():
    K = PointCloud([[0.0, 0.0], [1.0, 0.0]])
    x = [0.3, 0.4]
    gaps = [K.distance(x) ** 2 - smoothed_sq_distance(x, K, s) for s in (1.0, 0.1, 0.01)]
    assert gaps[0] > gaps[1] > gaps[2] >= 0
    assert gaps[2] < 1e-12


def test_smoothed_singleton_is_exact():
    K = PointCloud([[1.0, 2.0, 3.0]])
    x = np.array([0.0, 0.0, 0.0])
    assert smoothed_sq_distance(x, K, 0.7) == pytest.approx(14.0, rel=1e-14)


def test_smoothed_stable_far_away():
    K = PointCloud([[0.0], [1.0]])
    v = smoothed_sq_distance([1e6], K, 1e-3)
    assert math.isfinite(v) and v == pytest.approx((1e6 - 1) ** 2, rel=1e-12)


def test_smoothed_rejects_nonpositive_sigma():
    with pytest.raises(ValueError):
        smoothed_sq_distance([0.0], PointCloud([[0.0]]), 0.0)


@settings(max_examples=50)
@given(arrays(float, st.tuples(st.integers(1, 40), st.integers(1, 4)), elements=finite))
def test_diameter_matches_brute_force(pts):
    K = PointCloud(pts)
    brute = max(np.linalg.norm(a - b) for a in pts for b in pts)
    assert diameter(K, block=7) == pytest.approx(brute, rel=1e-12, abs=1e-12)


def test_grid_diameter():
    K = PointCloud([[0, 0], [0, 1], [1, 0], [1, 1]])
    assert K.diameter == pytest.approx(math.sqrt(2))


def test_csv_round_trip(tmp_path):
    pts = np.random.default_rng(3).standard_normal((5, 3))
    p = tmp_path / "k.csv"
    PointCloud(pts).save_csv(p)
    assert np.array_equal(PointCloud.load_csv(p).points, pts)
    PointCloud(pts).save_csv(p, header=True)
    assert np.array_equal(PointCloud.load_csv(p, skip_header=True).points, pts)


def test_csv_ragged_rows_rejected(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,2\n3,4,5\n")
    with pytest.raises(ValueError, match="columns"):
        PointCloud.load_csv(p)
