"""Point-cloud ingestion and the object-local reference frame.

The frame's Z axis is the negated gravity direction; X is the dominant
principal axis of the cloud projected onto the plane orthogonal to Z; Y
completes a right-handed frame.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyInputError, FormatError, GeometryError

log = logging.getLogger(__name__)

DEFAULT_GRAVITY = (0.0, 0.0, -1.0)
# relative eigenvalue gap below which the principal axis is considered undefined
SPECTRAL_GAP_TOL = 1e-9
PARALLEL_TOL_RAD = 1e-6


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    frame_id: str = "world"
    n_dropped: int = field(default=0, compare=False)

    def __post_init__(self):
        pts = _frozen(self.points).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise GeometryError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class ReferenceFrame:
    """Rigid transform; ``rotation`` columns are the frame axes in world coordinates."""

    rotation: np.ndarray
    translation: np.ndarray
    eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen(self.rotation).reshape(3, 3))
        object.__setattr__(self, "translation", _frozen(self.translation).reshape(3))
        object.__setattr__(self, "eigenvalues", _frozen(self.eigenvalues).reshape(3))

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    def to_frame(self, points):
        return (np.asarray(points, dtype=np.float64) - self.translation) @ self.rotation

    def to_world(self, points):
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def rotate_to_world(self, vectors):
        return np.asarray(vectors, dtype=np.float64) @ self.rotation.T


# ------------------------------------------------------------------ loading


def read_pcd_ascii(path):
    """Parse an ASCII PCD v0.7 file into ``{field: column}`` (rows with NaN kept)."""
    path = Path(path)
    try:
        text = path.read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    lines = text.splitlines()
    header = {}
    body_start = None
    for i, line in enumerate(lines):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, *vals = line.split()
        header[key.upper()] = vals
        if key.upper() == "DATA":
            body_start = i + 1
            break
    if body_start is None or "FIELDS" not in header:
        raise FormatError(f"{path}: malformed PCD header (FIELDS/DATA missing)")
    if header["DATA"][:1] != ["ascii"]:
        raise FormatError(f"{path}: only 'DATA ascii' PCD files are supported")
    fields = header["FIELDS"]
    counts = [int(c) for c in header.get("COUNT", ["1"] * len(fields))]
    if len(counts) != len(fields):
        raise FormatError(f"{path}: COUNT and FIELDS lengths differ")
    ncols = sum(counts)
    rows = [ln.split() for ln in lines[body_start:] if ln.strip()]
    if any(len(r) != ncols for r in rows):
        raise FormatError(f"{path}: data row width differs from the declared {ncols} columns")
    try:
        data = np.array(rows, dtype=np.float64).reshape(-1, ncols)
    except ValueError as exc:
        raise FormatError(f"{path}: unparsable data row: {exc}") from exc
    out = {}
    col = 0
    for name, cnt in zip(fields, counts):
        out[name] = data[:, col] if cnt == 1 else data[:, col : col + cnt]
        col += cnt
    return out


def _read_xyz_text(path):
    try:
        rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    except (OSError, UnicodeDecodeError) as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if any(len(r) < 3 for r in rows):
        raise FormatError(f"{path}: every row needs at least 3 columns")
    try:
        return np.array([r[:3] for r in rows], dtype=np.float64).reshape(-1, 3)
    except ValueError as exc:
        raise FormatError(f"{path}: unparsable row: {exc}") from exc


def load_point_cloud(path, format=None):
    """Load ``pcd-ascii`` or ``xyz-text``; rows with non-finite values are dropped."""
    path = Path(path)
    if format is None:
        format = "pcd-ascii" if path.suffix.lower() == ".pcd" else "xyz-text"
    if format == "pcd-ascii":
        cols = read_pcd_ascii(path)
        if not {"x", "y", "z"} <= set(cols):
            raise FormatError(f"{path}: PCD must declare fields x, y, z")
        pts = np.column_stack([cols["x"], cols["y"], cols["z"]])
    elif format == "xyz-text":
        pts = _read_xyz_text(path)
    else:
        raise ValueError(f"unknown point cloud format {format!r}")
    ok = np.all(np.isfinite(pts), axis=1)
    dropped = int((~ok).sum())
    if dropped:
        log.info("%s: dropped %d rows with non-finite coordinates", path, dropped)
    if not ok.any():
        raise EmptyInputError(f"{path}: zero valid points")
    return PointCloud(pts[ok], frame_id="world", n_dropped=dropped)


# ------------------------------------------------------------------ frame


def centroid(cloud):
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    if len(pts) == 0:
        raise EmptyInputError("centroid of an empty cloud")
    return pts.mean(axis=0)


def covariance(points):
    """Population covariance (divides by n)."""
    d = points - points.mean(axis=0)
    return d.T @ d / len(points)


def _largest_component_positive(v):
    return v if v[np.argmax(np.abs(v))] > 0 else -v


def _principal_sign(v, centered):
    # third moment along v is pose-intrinsic; only symmetric clouds fall back
    skew = np.mean((centered @ v) ** 3)
    scale = np.mean(np.abs(centered @ v)) ** 3
    if abs(skew) > 1e-9 * max(scale, 1e-300):
        return v if skew > 0 else -v
    return _largest_component_positive(v)


def compute_reference_frame(cloud, gravity=DEFAULT_GRAVITY):
    pts = cloud.points
    if len(pts) < 3:
        raise GeometryError("reference frame needs at least 3 points")
    g = np.asarray(gravity, dtype=np.float64)
    if abs(np.linalg.norm(g) - 1.0) > 1e-6:
        raise GeometryError(f"gravity must be a unit vector, got norm {np.linalg.norm(g):.6g}")
    z = -g / np.linalg.norm(g)
    c = pts.mean(axis=0)
    centered = pts - c
    cov = centered.T @ centered / len(pts)
    if np.trace(cov) <= 1e-24:
        raise GeometryError("degenerate covariance: all points coincide")
    vals, vecs = np.linalg.eigh(cov)
    vals, vecs = np.clip(vals[::-1], 0.0, None), vecs[:, ::-1]
    v1 = vecs[:, 0]
    axis = None
    if vals[0] - vals[1] > SPECTRAL_GAP_TOL * vals[0]:
        v1 = _principal_sign(v1, centered)
        proj = v1 - (v1 @ z) * z
        if np.linalg.norm(proj) > np.sin(PARALLEL_TOL_RAD):
            axis = proj
    if axis is None:
        # undefined or gravity-aligned principal axis: use world X (or Y) instead
        for fallback in (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])):
            proj = fallback - (fallback @ z) * z
            if np.linalg.norm(proj) > 1e-6:
                axis = proj
                break
    x = axis / np.linalg.norm(axis)
    y = np.cross(z, x)
    return ReferenceFrame(np.column_stack([x, y, z]), c, vals)


def transform_to_frame(cloud, frame):
    return PointCloud(frame.to_frame(cloud.points), frame_id="object")
