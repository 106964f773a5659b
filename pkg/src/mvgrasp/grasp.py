"""Grasp maps, decoding of ranked grasps, and lifting image grasps to 3D.

Image conventions: ``u`` is the row index and ``v`` the column index; a grasp
angle ``phi`` is measured in the image plane from the column axis towards the
row axis, so the gripper closes along ``(cos phi, sin phi)`` in (col, row).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInputError
from .projection import NormalizedView

W_MAX_M = 0.14


@dataclass(frozen=True)
class GraspMap:
    quality: np.ndarray
    sin2phi: np.ndarray
    cos2phi: np.ndarray
    width: np.ndarray
    w_max: float = W_MAX_M
    source: object = field(default=None, repr=False, compare=False)

    @property
    def shape(self):
        return self.quality.shape

    @property
    def angle(self):
        return 0.5 * np.arctan2(self.sin2phi, self.cos2phi)


@dataclass(frozen=True)
class Grasp2D:
    u: int
    v: int
    phi: float
    width: float
    quality: float


@dataclass(frozen=True)
class Grasp3D:
    position: np.ndarray  # world frame (m)
    position_object: np.ndarray  # object frame (m)
    approach_axis: np.ndarray  # world frame unit vector
    closing_axis: np.ndarray  # world frame unit vector
    phi: float
    width: float
    quality: float
    view: str
    grasp2d: Grasp2D

    def to_dict(self):
        return {
            "u": int(self.grasp2d.u),
            "v": int(self.grasp2d.v),
            "phi_rad": float(self.phi),
            "width_m": float(self.width),
            "quality": float(self.quality),
            "position_xyz_m": [float(x) for x in self.position],
            "approach_axis": [float(x) for x in self.approach_axis],
            "closing_axis": [float(x) for x in self.closing_axis],
            "view": self.view,
        }


def postprocess(raw, w_max=W_MAX_M, source=None):
    """Turn raw (4, h, w) head outputs into a range-constrained :class:`GraspMap`."""
    raw = np.asarray(raw, dtype=np.float64)
    q = np.clip(raw[0], 0.0, 1.0)
    s, c = raw[1], raw[2]
    norm = np.hypot(s, c)
    safe = norm > 1e-6
    s = np.where(safe, s / np.where(safe, norm, 1.0), np.clip(s, -1.0, 1.0))
    c = np.where(safe, c / np.where(safe, norm, 1.0), np.clip(c, -1.0, 1.0))
    w = np.clip(raw[3], 0.0, 1.0) * w_max
    return GraspMap(q, s, c, w, w_max, source)


def predict_grasp_map(net, view, w_max=W_MAX_M):
    """Run the network on one normalized view (or a bare 2D array)."""
    pixels = view.pixels if isinstance(view, NormalizedView) else np.asarray(view)
    raw = net.forward(pixels[None, None], train=False)[0]
    return postprocess(raw, w_max, view)


def decode_best_grasps(gmap, k=10, tau=0.8):
    """Top-``k`` pixels by quality (ties by raster order), dropping ``q < tau``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    q = gmap.quality.ravel()
    order = np.argsort(-q, kind="stable")[:k]
    ncol = gmap.quality.shape[1]
    out = []
    for idx in order:
        if q[idx] < tau:
            break
        u, v = divmod(int(idx), ncol)
        phi = 0.5 * np.arctan2(gmap.sin2phi[u, v], gmap.cos2phi[u, v])
        out.append(Grasp2D(u, v, float(phi), float(gmap.width[u, v]), float(q[idx])))
    return out


def estimate_grasp_depth(view, u, v, delta=0.005):
    """Minimum occupied depth within ``delta`` meters of pixel (u, v)."""
    l = view.grid.l
    if not (0 <= u < l and 0 <= v < l):
        raise IndexError(f"pixel ({u}, {v}) outside a {l}x{l} view")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    r = delta / view.grid.bin_size
    ri = int(np.floor(r))
    r0, r1 = max(u - ri, 0), min(u + ri + 1, l)
    c0, c1 = max(v - ri, 0), min(v + ri + 1, l)
    rows, cols = np.mgrid[r0:r1, c0:c1]
    near = (rows - u) ** 2 + (cols - v) ** 2 <= r * r + 1e-9
    patch = view.pixels[r0:r1, c0:c1]
    vals = patch[near & np.isfinite(patch)]
    if vals.size == 0:
        raise EmptyInputError(f"no occupied pixel within {delta} m of ({u}, {v})")
    return float(vals.min())


def grasp_2d_to_3d(g, view, frame, delta=0.005):
    depth = estimate_grasp_depth(view, g.u, g.v, delta)
    p_obj = view.pixel_to_object(g.u, g.v, depth)
    e_col, e_row, e_look = view.basis[:, 0], view.basis[:, 1], view.basis[:, 2]
    closing = np.cos(g.phi) * e_col + np.sin(g.phi) * e_row
    return Grasp3D(
        position=frame.to_world(p_obj),
        position_object=p_obj,
        approach_axis=frame.rotate_to_world(e_look),
        closing_axis=frame.rotate_to_world(closing),
        phi=g.phi,
        width=g.width,
        quality=g.quality,
        view=view.axis,
        grasp2d=g,
    )
