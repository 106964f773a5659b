import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mvgrasp.errors import EmptyInputError
from mvgrasp.geometry import PointCloud, ReferenceFrame
from mvgrasp.grasp import (
    Grasp2D,
    GraspMap,
    decode_best_grasps,
    estimate_grasp_depth,
    grasp_2d_to_3d,
    postprocess,
    predict_grasp_map,
)
from mvgrasp.network import build_network
from mvgrasp.projection import GridSpec, project
from mvgrasp.train import calibrate_batchnorm


def make_map(q, s=None, c=None, w=None):
    z = np.zeros_like(q)
    return GraspMap(q, z if s is None else s, np.ones_like(q) if c is None else c, z if w is None else w)


@given(seed=st.integers(0, 2**31))
def test_postprocess_ranges(seed):
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((4, 6, 6)) * 3
    raw[1:3, 0, 0] = 0.0
    g = postprocess(raw, w_max=0.14)
    assert g.quality.min() >= 0 and g.quality.max() <= 1
    assert g.width.min() >= 0 and g.width.max() <= 0.14
    norm = np.hypot(g.sin2phi, g.cos2phi)
    np.testing.assert_allclose(norm.ravel()[1:], 1.0)
    assert np.all(np.abs(g.angle) <= np.pi / 2)


def test_decode_examples():
    q = np.zeros((8, 8))
    q[3, 4] = 0.9
    g = decode_best_grasps(make_map(q), k=1, tau=0.5)[0]
    assert (g.u, g.v) == (3, 4)
    assert decode_best_grasps(make_map(q), k=1)[0].phi == 0.0
    g = decode_best_grasps(make_map(q, s=np.ones_like(q), c=np.zeros_like(q)), k=1)[0]
    assert g.phi == pytest.approx(np.pi / 4)
    assert decode_best_grasps(make_map(q), k=1, tau=0.95) == []
    with pytest.raises(ValueError):
        decode_best_grasps(make_map(q), k=0)


def test_decode_ties_in_raster_order():
    q = np.zeros((4, 4))
    q[2, 1] = q[0, 3] = q[3, 0] = 1.0
    got = [(g.u, g.v) for g in decode_best_grasps(make_map(q), k=3, tau=0.0)]
    assert got == [(0, 3), (2, 1), (3, 0)]


@given(seed=st.integers(0, 2**31), k=st.integers(1, 10))
def test_decode_sorted_and_thresholded(seed, k):
    rng = np.random.default_rng(seed)
    q = rng.random((6, 7))
    found = decode_best_grasps(make_map(q), k=k, tau=0.5)
    qs = [g.quality for g in found]
    assert qs == sorted(qs, reverse=True) and all(x >= 0.5 for x in qs)
    assert len(found) == min(k, int((q >= 0.5).sum()))


def _view_with(values):
    """XoY view over a 12x12 grid whose pixels hold ``values`` (dict of (r, c) -> depth)."""
    grid = GridSpec(12, 0.01)
    pts = []
    for (r, c), d in values.items():
        a, b = grid.pixel_centers(c), grid.pixel_centers(r)
        pts.append([a, -b, -d])  # XoY: col = x, row = -y, depth = -z
    return project(PointCloud(pts), "XoY", grid)


def test_estimate_grasp_depth_examples():
    v = _view_with({(5, 5): 0.2, (5, 6): 0.15, (8, 8): 0.01})
    assert estimate_grasp_depth(v, 5, 5, delta=0.01) == pytest.approx(0.15)
    assert estimate_grasp_depth(v, 5, 5, delta=0.0) == pytest.approx(0.2)
    with pytest.raises(EmptyInputError):
        estimate_grasp_depth(v, 0, 0, delta=0.01)
    with pytest.raises(IndexError):
        estimate_grasp_depth(v, 12, 0)


@given(seed=st.integers(0, 2**31), delta=st.floats(0.0, 0.04))
def test_estimate_depth_brute_force(seed, delta):
    rng = np.random.default_rng(seed)
    vals = {(int(r), int(c)): float(rng.uniform(-0.05, 0.05)) for r, c in rng.integers(0, 12, (20, 2))}
    v = _view_with(vals)
    u, c0 = map(int, rng.integers(0, 12, 2))
    cand = [v.pixels[r, c] for r in range(12) for c in range(12)
            if np.isfinite(v.pixels[r, c]) and np.hypot(r - u, c - c0) * 0.01 <= delta + 1e-12]
    if cand:
        assert estimate_grasp_depth(v, u, c0, delta) == min(cand)
    else:
        with pytest.raises(EmptyInputError):
            estimate_grasp_depth(v, u, c0, delta)


@pytest.mark.parametrize("axis", ["XoY", "XoZ", "YoZ"])
def test_single_point_lifts_back(axis):
    p = np.array([[0.0123, -0.0234, 0.0071]])
    grid = GridSpec(24, 0.005)
    v = project(PointCloud(p), axis, grid)
    (u,), (c,) = np.nonzero(v.occupied_mask)
    g3 = grasp_2d_to_3d(Grasp2D(int(u), int(c), 0.3, 0.05, 0.9), v, ReferenceFrame.identity())
    err = np.abs(v.basis.T @ (g3.position - p[0]))
    assert err[0] <= grid.bin_size / 2 and err[1] <= grid.bin_size / 2 and err[2] <= 1e-9
    np.testing.assert_allclose(g3.position, g3.position_object)
    assert abs(g3.closing_axis @ g3.approach_axis) < 1e-12


def test_top_view_approaches_along_minus_z():
    v = project(PointCloud([[0.0, 0.0, 0.0]]), "XoY", GridSpec(12, 0.01))
    g3 = grasp_2d_to_3d(Grasp2D(6, 6, 0.0, 0.05, 1.0), v, ReferenceFrame.identity())
    np.testing.assert_array_equal(g3.approach_axis, [0, 0, -1])
    d = g3.to_dict()
    assert set(d) == {"u", "v", "phi_rad", "width_m", "quality", "position_xyz_m", "approach_axis", "closing_axis", "view"}


def test_predict_grasp_map_deterministic(rng):
    net = build_network(seed=0)
    calibrate_batchnorm(net, rng.standard_normal((2, 1, 24, 24)))
    x = rng.standard_normal((24, 24))
    a, b = predict_grasp_map(net, x), predict_grasp_map(net, x)
    assert np.array_equal(a.quality, b.quality) and np.array_equal(a.width, b.width)
    assert a.shape == (24, 24) and np.all(np.isfinite(a.angle))
