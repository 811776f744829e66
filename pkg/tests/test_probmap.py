import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from raysamp.probmap import (BetaSchedule, DegenerateMapError, ProbMap, beta, clamp,
                             depth_std_map, fuse, normalize_map, pixel_std_map)

from oracles import color_std, two_pass_std


@pytest.mark.parametrize("x,expected", [(22, 6), (2, 4), (5, 5)])
def test_clamp_examples(x, expected):
    assert clamp(4, 6, x) == expected


def test_clamp_rejects_inverted_bounds():
    with pytest.raises(ValueError):
        clamp(6, 4, 5)


def test_constant_image_zero_std():
    img = np.broadcast_to([0.3, 0.7, 0.1], (9, 11, 3))
    assert not pixel_std_map(img).any()
    assert not depth_std_map(np.full((5, 5), 2.7)).any()


def test_single_hot_window():
    plane = np.zeros((3, 3))
    plane[1, 1] = 1.0
    assert pixel_std_map(plane)[1, 1] == pytest.approx(math.sqrt(8 / 81), rel=1e-12)


def test_even_window_rejected():
    with pytest.raises(ValueError):
        pixel_std_map(np.zeros((4, 4)), n=4)
    with pytest.raises(ValueError):
        depth_std_map(np.zeros((4, 4)), n=2)


def test_vertical_step():
    img = np.zeros((8, 10, 3))
    img[:, 5:] = 1.0
    out = pixel_std_map(img)
    np.testing.assert_allclose(out, color_std(img, 3), rtol=1e-9, atol=1e-15)
    assert not out[:, :4].any() and not out[:, 6:].any()
    assert out[:, 4:6].min() > 0


def test_two_plane_depth_peak():
    d1, d2 = 1.0, 3.5
    depth = np.full((6, 8), d1)
    depth[:, 4:] = d2
    out = depth_std_map(depth)
    peak = abs(d1 - d2) * math.sqrt(2) / 3
    np.testing.assert_allclose(out[:, 3], peak, rtol=1e-12)
    np.testing.assert_allclose(out[:, 4], peak, rtol=1e-12)
    assert not out[:, :3].any() and not out[:, 5:].any()


def test_outlier_footprint():
    depth = np.full((7, 7), 2.0)
    depth[3, 3] = 9.0
    nz = depth_std_map(depth) > 0
    expected = np.zeros((7, 7), dtype=bool)
    expected[2:5, 2:5] = True
    np.testing.assert_array_equal(nz, expected)


def test_std_matches_two_pass_oracle():
    rng = np.random.default_rng(11)
    for n in (3, 5):
        img = rng.random((10, 12, 3))
        np.testing.assert_allclose(pixel_std_map(img, n), color_std(img, n), rtol=1e-6, atol=1e-12)
        d = rng.random((10, 12)) * 5
        np.testing.assert_allclose(depth_std_map(d, n), two_pass_std(d, n), rtol=1e-6, atol=1e-12)


def test_std_identity_random_windows():
    rng = np.random.default_rng(5)
    for _ in range(64):
        win = rng.normal(size=9) * rng.uniform(0.01, 100) + rng.uniform(-100, 100)
        one_pass = math.sqrt(max(np.mean(win ** 2) - np.mean(win) ** 2, 0.0))
        assert one_pass == pytest.approx(np.std(win), rel=1e-6)


def test_normalize_example():
    raw = np.full(100, 0.2)
    raw[0], raw[1], raw[2], raw[3] = 0.5, 0.0005, 0.25, 0.0
    # rebalance so the mean stays 0.2
    raw[4] += 100 * 0.2 - raw.sum()
    raw = raw.reshape(10, 10)
    assert raw.mean() == pytest.approx(0.2, abs=1e-15) and raw.max() == 0.5
    pm = normalize_map(raw)
    assert pm.s == pytest.approx(0.002, rel=1e-12)
    v = pm.values.ravel()
    assert v[0] == 1.0
    assert v[1] == pytest.approx(0.004, rel=1e-12)
    assert v[2] == pytest.approx(0.5, rel=1e-12)
    assert v[3] == pytest.approx(0.004, rel=1e-12)


def test_normalize_floor_values():
    raw = np.full((4, 4), 0.01)
    raw[0, 0] = 2.0
    pm = normalize_map(raw, s_coef=0.01 / raw.mean())  # s equal to the floor value exactly
    np.testing.assert_allclose(pm.values.ravel()[1:], pm.s / 2.0, rtol=1e-12)


def test_normalize_degenerate():
    with pytest.raises(DegenerateMapError, match="degenerate map"):
        normalize_map(np.zeros((4, 4)))


def test_beta_schedule():
    sched = BetaSchedule(1000)
    assert beta(0, sched) == 0.0
    assert beta(1000, sched) == 0.5
    assert beta(500, sched) == 0.25
    assert beta(5000, sched) == 0.5
    with pytest.raises(ValueError):
        beta(1, BetaSchedule(0))


def test_fuse_examples():
    pc = ProbMap(np.ones((3, 3)), "pixel")
    pd = ProbMap(np.full((3, 3), 0.5), "depth")
    np.testing.assert_array_equal(fuse(pc, pd, 0.0).values, pd.values)
    np.testing.assert_allclose(fuse(pc, pd, 0.5).values, 0.75)
    np.testing.assert_allclose(fuse(pc, pd, 0.25).values, 0.625, rtol=1e-15)
    with pytest.raises(ValueError):
        fuse(pc, ProbMap(np.ones((2, 3)), "depth"), 0.1)


# zero or normal floats only: scaling a subnormal by alpha rounds the input itself,
# so alpha * raw is no longer an exact multiple of raw
maps = arrays(np.float64, st.tuples(st.integers(3, 12), st.integers(3, 12)),
              elements=st.one_of(st.just(0.0), st.floats(1e-200, 10))).filter(lambda a: a.max() > 0)


@settings(max_examples=100, deadline=None)
@given(maps, st.floats(1e-3, 1e3))
def test_normalize_scale_invariant(raw, alpha):
    a = normalize_map(raw).values
    b = normalize_map(alpha * raw).values
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)
    assert a.max() == 1.0
    assert a.min() >= 0.01 * raw.mean() / raw.max() * (1 - 1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 4))
def test_std_translation_invariant(seed, dy, dx):
    rng = np.random.default_rng(seed)
    img = rng.random((24, 24))
    shifted = np.roll(img, (dy, dx), axis=(0, 1))
    a = depth_std_map(img)
    b = depth_std_map(shifted)
    # interior away from the wrapped seam and the padded border
    np.testing.assert_allclose(b[dy + 1 + 1:-2, dx + 1 + 1:-2], a[1 + 1:-2 - dy, 1 + 1:-2 - dx],
                               rtol=0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(maps, st.floats(0, 0.5))
def test_fuse_affine(values, b):
    rng = np.random.default_rng(0)
    pc = ProbMap(values, "pixel")
    pd = ProbMap(rng.random(values.shape), "depth")
    np.testing.assert_allclose(fuse(pc, pd, b).values, pd.values + b * (pc.values - pd.values),
                               rtol=0, atol=1e-12)
