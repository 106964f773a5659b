"""Synthetic tabletop scenes written in the Cornell file layout.

Used for fixtures, demos and the desk-scale training check when the real
Cornell data is not available.  Each scene is one object (box, lying
cylinder or elliptic puck) on a table seen from above by a 640x480 pinhole
camera; positive rectangles close across the object's short axis.
"""

from pathlib import Path

import numpy as np

from .dataset import CORNELL_SHAPE, GraspRect, Sample
from .projection import filled_pixels

FOCAL = 525.0

_PCD_HEADER = """# .PCD v.7 - Point Cloud Data file format
FIELDS x y z rgb index
SIZE 4 4 4 4 4
TYPE F F F F U
COUNT 1 1 1 1 1
WIDTH {n}
HEIGHT 1
POINTS {n}
DATA ascii
"""


def synthetic_scene(rng, shape=CORNELL_SHAPE, window=160):
    """Return ``(rows, cols, depth_z, rects)`` for one random scene."""
    h, w = shape
    table = rng.uniform(0.68, 0.75)
    cx = w / 2 + rng.uniform(-30, 30)
    cy = h / 2 + rng.uniform(-30, 30)
    kind = ("box", "cylinder", "ellipse")[rng.integers(3)]
    theta = rng.uniform(-np.pi / 2, np.pi / 2)
    length = rng.uniform(60, 125)
    thick = rng.uniform(22, 45)
    height = rng.uniform(0.03, 0.08)

    r0 = int(round(cy - window / 2))
    c0 = int(round(cx - window / 2))
    rows, cols = np.mgrid[r0 : r0 + window, c0 : c0 + window]
    a = (cols - cx) * np.cos(theta) + (rows - cy) * np.sin(theta)
    b = -(cols - cx) * np.sin(theta) + (rows - cy) * np.cos(theta)
    depth = np.full(rows.shape, table)
    if kind == "ellipse":
        inside = (2 * a / length) ** 2 + (2 * b / thick) ** 2 < 1
        depth[inside] = table - height
    else:
        inside = (np.abs(a) < length / 2) & (np.abs(b) < thick / 2)
        if kind == "box":
            depth[inside] = table - height
        else:
            depth[inside] = table - height * np.sqrt(np.clip(1 - (2 * b[inside] / thick) ** 2, 0, 1))
    depth += rng.normal(0.0, 5e-4, depth.shape)

    rects = []
    reach = 0.2 if kind == "ellipse" else 0.3
    for t in rng.uniform(-reach, reach, rng.integers(3, 6)) * length:
        local = thick
        if kind == "ellipse":
            local = thick * np.sqrt(max(1 - (2 * t / length) ** 2, 0.05))
        width = local + rng.uniform(10, 20)
        plate = rng.uniform(0.35, 0.6) * width
        gx = cx + t * np.cos(theta)
        gy = cy + t * np.sin(theta)
        rects.append(GraspRect.from_params(gx, gy, theta + np.pi / 2, width, plate))
    keep = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
    return rows[keep], cols[keep], depth[keep], rects


def write_cornell_scene(directory, number, rng, shape=CORNELL_SHAPE, window=160):
    """Write ``pcdNNNN.txt`` and ``pcdNNNNcpos.txt`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows, cols, z, rects = synthetic_scene(rng, shape, window)
    h, w = shape
    x = (cols - w / 2) * z / FOCAL
    y = (rows - h / 2) * z / FOCAL
    index = rows * w + cols
    stem = f"pcd{number:04d}"
    pcd = directory / f"{stem}.txt"
    with open(pcd, "w") as fh:
        fh.write(_PCD_HEADER.format(n=len(z)))
        for xi, yi, zi, ii in zip(x, y, z, index):
            fh.write(f"{xi:.6f} {yi:.6f} {zi:.6f} 0 {ii}\n")
    with open(directory / f"{stem}cpos.txt", "w") as fh:
        for r in rects:
            for vx, vy in r.vertices:
                fh.write(f"{vx:.3f} {vy:.3f}\n")
    return pcd


def write_synthetic_cornell(root, n_images, seed=0, start=100, window=160):
    """Write ``n_images`` scenes numbered from ``start``; returns the directory."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    for k in range(n_images):
        write_cornell_scene(root, start + k, rng, window=window)
    return root


# ------------------------------------------------------------------ object clouds


def box_cloud(dims=(0.12, 0.06, 0.04), n=4000, rng=None):
    """Points sampled uniformly on the surface of an axis-aligned box centered at 0."""
    rng = rng or np.random.default_rng(0)
    d = np.asarray(dims, dtype=np.float64)
    areas = np.array([d[1] * d[2], d[0] * d[2], d[0] * d[1]])
    face = rng.choice(3, size=n, p=areas / areas.sum())
    pts = rng.uniform(-0.5, 0.5, (n, 3)) * d
    side = rng.choice([-0.5, 0.5], size=n)
    pts[np.arange(n), face] = side * d[face]
    return pts


def random_rotation(rng):
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def view_sample(view, margin_px=4.0, sid="view"):
    """Training sample for one depth view with a rectangle across the short axis.

    The rectangle sits at the centroid of the occupied pixels and closes along
    the minor principal direction of their footprint.
    """
    rows, cols = np.nonzero(view.occupied_mask)
    pts = np.column_stack([cols, rows]).astype(np.float64)
    c = pts.mean(axis=0)
    vals, vecs = np.linalg.eigh(np.cov((pts - c).T))
    minor = vecs[:, 0]
    extent = np.ptp((pts - c) @ minor) + 1.0
    rect = GraspRect.from_params(c[0], c[1], np.arctan2(minor[1], minor[0]), extent + margin_px, 0.5 * extent)
    return Sample(filled_pixels(view).astype(np.float32), [rect], sid, sid)
