"""Cornell grasp data: rectangles, depth rendering, targets, augmentation, splits.

Image coordinates are continuous ``(x, y)`` = (column, row) with pixel centers
at integer positions.  For a rectangle with vertices ``v0..v3`` the edge
``v0 -> v1`` spans the gripper opening (its length is the grasp width) and
``v1 -> v2`` spans the jaw plate (its length is the rectangle height).

Cached samples use the ``MVGD`` container (little-endian)::

    b"MVGD" | u32 version (=1) | u32 sample count
    per sample: u16 id length | UTF-8 id | u16 source-id length | UTF-8 source id
                u16 height | u16 width
                f32 depth[height * width] | u32 rect count | f32 vertices[count * 8]
    u32 CRC32 of every preceding byte
"""

import logging
import math
import re
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import _kernels
from .errors import EmptyInputError, FormatError
from .geometry import read_pcd_ascii
from .projection import standardize

log = logging.getLogger(__name__)

CORNELL_SHAPE = (480, 640)


def wrap_half_pi(phi):
    """Map an angle to [-pi/2, pi/2)."""
    return (phi + np.pi / 2) % np.pi - np.pi / 2


@dataclass(frozen=True)
class GraspRect:
    vertices: np.ndarray  # (4, 2) of (x, y)

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(4, 2)
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @classmethod
    def from_params(cls, cx, cy, phi, width, height):
        d = np.array([np.cos(phi), np.sin(phi)])
        n = np.array([-np.sin(phi), np.cos(phi)])
        c = np.array([cx, cy], dtype=np.float64)
        hw, hh = 0.5 * width * d, 0.5 * height * n
        return cls(np.array([c - hw - hh, c + hw - hh, c + hw + hh, c - hw + hh]))

    @property
    def center(self):
        return self.vertices.mean(axis=0)

    @property
    def angle(self):
        dx, dy = self.vertices[1] - self.vertices[0]
        return float(wrap_half_pi(math.atan2(dy, dx)))

    @property
    def width(self):
        return float(np.linalg.norm(self.vertices[1] - self.vertices[0]))

    @property
    def height(self):
        return float(np.linalg.norm(self.vertices[2] - self.vertices[1]))

    @property
    def area(self):
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))

    def transformed(self, matrix, offset):
        """Apply ``p -> matrix @ p + offset`` to every vertex."""
        return GraspRect(self.vertices @ np.asarray(matrix).T + np.asarray(offset))


@dataclass(frozen=True)
class Sample:
    depth: np.ndarray  # (h, w) meters
    rects: tuple
    id: str
    source_id: str = None

    def __post_init__(self):
        object.__setattr__(self, "rects", tuple(self.rects))
        if self.source_id is None:
            object.__setattr__(self, "source_id", self.id)


@dataclass(frozen=True)
class TargetMaps:
    quality: np.ndarray
    sin2phi: np.ndarray
    cos2phi: np.ndarray
    width: np.ndarray

    def stack(self, dtype=np.float32):
        return np.stack([self.quality, self.sin2phi, self.cos2phi, self.width]).astype(dtype)


# ------------------------------------------------------------------ parsing


def parse_rect_file(path, return_skipped=False):
    """Read a Cornell ``cpos``/``cneg`` file: 4 ``x y`` lines per rectangle."""
    try:
        lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    except (OSError, UnicodeDecodeError) as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if len(lines) % 4:
        raise FormatError(f"{path}: {len(lines)} lines is not a multiple of 4")
    pts = []
    for i, ln in enumerate(lines, 1):
        parts = ln.split()
        if len(parts) != 2:
            raise FormatError(f"{path}:{i}: expected 'x y', got {ln!r}")
        try:
            pts.append((float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise FormatError(f"{path}:{i}: unparsable line {ln!r}") from exc
    rects, skipped = [], 0
    for k in range(0, len(pts), 4):
        quad = np.array(pts[k : k + 4])
        if not np.all(np.isfinite(quad)):
            skipped += 1
            continue
        rects.append(GraspRect(quad))
    if skipped:
        log.info("%s: skipped %d rectangles with NaN vertices", path, skipped)
    return (rects, skipped) if return_skipped else rects


def render_index_depth(points, index, shape=CORNELL_SHAPE):
    """Bin organized-cloud points onto the image grid; pixel = min range; holes inpainted.

    ``index`` is the flat pixel index (row * width + col) stored by Cornell PCDs.
    """
    points = np.asarray(points, dtype=np.float64)
    index = np.asarray(index).astype(np.int64)
    h, w = shape
    ok = np.all(np.isfinite(points), axis=1) & (index >= 0) & (index < h * w)
    if not ok.any():
        raise EmptyInputError("no valid points to render")
    rng = np.linalg.norm(points[ok], axis=1)
    depth = _kernels.zbuffer(index[ok], rng, h * w).reshape(h, w)
    return inpaint_nearest(depth)


def inpaint_nearest(depth):
    holes = ~np.isfinite(depth)
    if not holes.any():
        return depth
    idx = ndimage.distance_transform_edt(holes, return_distances=False, return_indices=True)
    return depth[tuple(idx)]


def load_cornell_sample(pcd_path, rect_path, shape=CORNELL_SHAPE):
    cols = read_pcd_ascii(pcd_path)
    missing = {"x", "y", "z", "index"} - set(cols)
    if missing:
        raise FormatError(f"{pcd_path}: Cornell PCD lacks fields {sorted(missing)}")
    pts = np.column_stack([cols["x"], cols["y"], cols["z"]])
    depth = render_index_depth(pts, cols["index"], shape)
    rects = parse_rect_file(rect_path)
    sid = Path(pcd_path).stem
    return Sample(depth.astype(np.float32), rects, sid)


_CPOS = re.compile(r"^(pcd\d+)cpos\.txt$")


def find_cornell_pairs(root):
    """``[(pcd_path, cpos_path), ...]`` under ``root``, sorted by id."""
    pairs = []
    for cpos in sorted(Path(root).rglob("pcd*cpos.txt")):
        m = _CPOS.match(cpos.name)
        if not m:
            continue
        pcd = cpos.with_name(m.group(1) + ".txt")
        if pcd.exists():
            pairs.append((pcd, cpos))
    if not pairs:
        raise EmptyInputError(f"no pcdNNNN.txt / pcdNNNNcpos.txt pairs under {root}")
    return sorted(pairs, key=lambda p: p[0].stem)


def load_cornell(root, shape=CORNELL_SHAPE, limit=None):
    pairs = find_cornell_pairs(root)
    if limit is not None:
        pairs = pairs[:limit]
    return [load_cornell_sample(p, r, shape) for p, r in pairs]


# ------------------------------------------------------------------ targets


def encode_targets(rects, shape, w_max_px, region="third"):
    """Rasterize rectangles into (Q, sin 2phi, cos 2phi, W) training maps.

    ``region="third"`` marks the central third of each rectangle along both
    axes, ``"full"`` the whole rectangle.  Later rectangles overwrite earlier
    ones.  A rectangle whose region covers no pixel center marks the pixel
    nearest to its center so no positive grasp is lost.
    """
    h, w = shape
    frac = {"third": 1.0 / 6.0, "full": 0.5}[region]
    q = np.zeros(shape, np.float32)
    s2 = np.zeros(shape, np.float32)
    c2 = np.zeros(shape, np.float32)
    wm = np.zeros(shape, np.float32)
    for rect in rects:
        cx, cy = rect.center
        phi = rect.angle
        d = np.array([np.cos(phi), np.sin(phi)])
        n = np.array([-np.sin(phi), np.cos(phi)])
        ha, hb = frac * rect.width, frac * rect.height
        ext_x = abs(ha * d[0]) + abs(hb * n[0])
        ext_y = abs(ha * d[1]) + abs(hb * n[1])
        x0, x1 = max(int(np.ceil(cx - ext_x)), 0), min(int(np.floor(cx + ext_x)), w - 1)
        y0, y1 = max(int(np.ceil(cy - ext_y)), 0), min(int(np.floor(cy + ext_y)), h - 1)
        mask_rows = mask_cols = None
        if x0 <= x1 and y0 <= y1:
            yy, xx = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
            a = (xx - cx) * d[0] + (yy - cy) * d[1]
            b = (xx - cx) * n[0] + (yy - cy) * n[1]
            inside = (np.abs(a) <= ha) & (np.abs(b) <= hb)
            if inside.any():
                mask_rows, mask_cols = yy[inside], xx[inside]
        if mask_rows is None:
            r, c = int(round(cy)), int(round(cx))
            if not (0 <= r < h and 0 <= c < w):
                continue
            mask_rows, mask_cols = np.array([r]), np.array([c])
        q[mask_rows, mask_cols] = 1.0
        s2[mask_rows, mask_cols] = np.sin(2 * phi)
        c2[mask_rows, mask_cols] = np.cos(2 * phi)
        wm[mask_rows, mask_cols] = min(max(rect.width / w_max_px, 0.0), 1.0)
    return TargetMaps(q, s2, c2, wm)


# ------------------------------------------------------------------ augmentation


@dataclass(frozen=True)
class AugmentPolicy:
    """Random rotation, zoom and crop to a square network input.

    The source-to-output map is ``p -> c_out + zoom * scale * R(theta) (p - C)``
    where ``C`` is the crop center in the source image: the image center
    (``center="image"``) or the mean of the rectangle centers
    (``center="grasps"``), shifted by up to ``jitter`` output pixels.
    """

    output_size: int = 48
    rotation: tuple = (-np.pi / 2, np.pi / 2)
    zoom: tuple = (0.8, 1.2)
    scale: float = 1.0
    jitter: float = 0.0
    center: str = "grasps"
    max_retries: int = 10

    @classmethod
    def identity(cls, output_size):
        return cls(output_size, (0.0, 0.0), (1.0, 1.0), 1.0, 0.0, "image")


def _rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def apply_affine(sample, matrix, src_center, output_size, sid=None):
    """Resample ``sample`` so that ``p_out = c_out + matrix @ (p_src - src_center)``."""
    S = output_size
    c_out = np.array([(S - 1) / 2.0, (S - 1) / 2.0])
    offset = c_out - matrix @ np.asarray(src_center, dtype=np.float64)
    inv = np.linalg.inv(matrix)
    yy, xx = np.mgrid[0:S, 0:S].astype(np.float64)
    pts = np.stack([xx.ravel(), yy.ravel()])
    src = inv @ (pts - offset[:, None])
    depth = ndimage.map_coordinates(
        np.asarray(sample.depth, dtype=np.float64), [src[1], src[0]], order=1, mode="nearest"
    ).reshape(S, S)
    rects = []
    lo, hi = -0.5, S - 0.5
    for r in sample.rects:
        t = r.transformed(matrix, offset)
        if np.all((t.vertices >= lo) & (t.vertices <= hi)):
            rects.append(t)
    return Sample(depth.astype(np.float32), rects, sid or sample.id, sample.source_id)


def augment(sample, rng, policy=None, sid=None):
    policy = policy or AugmentPolicy()
    h, w = np.asarray(sample.depth).shape
    for _ in range(max(policy.max_retries, 1)):
        theta = rng.uniform(*policy.rotation) if policy.rotation[0] != policy.rotation[1] else policy.rotation[0]
        zoom = rng.uniform(*policy.zoom) if policy.zoom[0] != policy.zoom[1] else policy.zoom[0]
        if policy.center == "grasps" and sample.rects:
            center = np.mean([r.center for r in sample.rects], axis=0)
        else:
            center = np.array([(w - 1) / 2.0, (h - 1) / 2.0])
        s = zoom * policy.scale
        if policy.jitter > 0:
            center = center + rng.uniform(-policy.jitter, policy.jitter, 2) / s
        out = apply_affine(sample, s * _rotation(theta), center, policy.output_size, sid)
        if out.rects:
            return out
    raise EmptyInputError(f"augmentation of {sample.id} kept no rectangle after {policy.max_retries} tries")


def sample_rng(seed, sample_id, index=0):
    """Independent stream per (seed, sample, augmentation index)."""
    key = zlib.crc32(str(sample_id).encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), key, int(index)]))


def augment_dataset(samples, per_sample, policy, seed=0, total=None):
    """``per_sample`` augmentations of each sample, trimmed to ``total`` if given."""
    out = []
    for s in samples:
        for k in range(per_sample):
            out.append(augment(s, sample_rng(seed, s.id, k), policy, sid=f"{s.id}#{k}"))
    if total is not None:
        out = out[:total]
    return out


def default_augmentations_per_image(n_images, target=51100):
    return math.ceil(target / max(n_images, 1))


# ------------------------------------------------------------------ training arrays


def network_input(sample):
    """Standardized depth crop with shape (1, h, w)."""
    x, _, _ = standardize(sample.depth)
    return x[None].astype(np.float32)


def training_arrays(samples, w_max_px, region="third"):
    xs = np.stack([network_input(s) for s in samples])
    ys = np.stack([encode_targets(s.rects, s.depth.shape, w_max_px, region).stack() for s in samples])
    return xs, ys


# ------------------------------------------------------------------ splits


def make_splits(items, ratio=0.8, seed=0, mode="augmented-level"):
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    items = list(items)
    if not items:
        raise EmptyInputError("cannot split an empty collection")
    rng = np.random.default_rng(seed)
    if mode == "augmented-level":
        perm = rng.permutation(len(items))
        n_train = int(round(ratio * len(items)))
        return [items[i] for i in perm[:n_train]], [items[i] for i in perm[n_train:]]
    if mode != "image-level":
        raise ValueError(f"unknown split mode {mode!r}")
    groups = {}
    for it in items:
        groups.setdefault(getattr(it, "source_id", it), []).append(it)
    keys = sorted(groups)
    perm = rng.permutation(len(keys))
    n_train = int(round(ratio * len(keys)))
    train_keys = {keys[i] for i in perm[:n_train]}
    train = [it for it in items if getattr(it, "source_id", it) in train_keys]
    test = [it for it in items if getattr(it, "source_id", it) not in train_keys]
    return train, test


# ------------------------------------------------------------------ cache container

CACHE_MAGIC = b"MVGD"
CACHE_VERSION = 1


def save_samples(samples, path):
    parts = [CACHE_MAGIC, struct.pack("<II", CACHE_VERSION, len(samples))]
    for s in samples:
        sid = s.id.encode("utf-8")
        src = (s.source_id or s.id).encode("utf-8")
        depth = np.ascontiguousarray(s.depth, dtype="<f4")
        h, w = depth.shape
        parts.append(struct.pack("<H", len(sid)) + sid)
        parts.append(struct.pack("<H", len(src)) + src)
        parts.append(struct.pack("<HH", h, w) + depth.tobytes())
        verts = np.array([r.vertices for r in s.rects], dtype="<f4").reshape(-1)
        parts.append(struct.pack("<I", len(s.rects)) + verts.tobytes())
    body = b"".join(parts)
    Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF))


def load_samples(path):
    blob = Path(path).read_bytes()
    if blob[:4] != CACHE_MAGIC:
        raise FormatError(f"{path}: bad magic, not an MVGD sample cache")
    if len(blob) < 16 or zlib.crc32(blob[:-4]) & 0xFFFFFFFF != struct.unpack("<I", blob[-4:])[0]:
        raise FormatError(f"{path}: checksum mismatch")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != CACHE_VERSION:
        raise FormatError(f"{path}: unsupported cache version {version}")
    pos = 12
    out = []
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", blob, pos)
            sid = blob[pos + 2 : pos + 2 + n].decode("utf-8")
            pos += 2 + n
            (n,) = struct.unpack_from("<H", blob, pos)
            src = blob[pos + 2 : pos + 2 + n].decode("utf-8")
            pos += 2 + n
            h, w = struct.unpack_from("<HH", blob, pos)
            pos += 4
            depth = np.frombuffer(blob, "<f4", h * w, pos).reshape(h, w).astype(np.float32)
            pos += 4 * h * w
            (nr,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            verts = np.frombuffer(blob, "<f4", nr * 8, pos).reshape(nr, 4, 2).astype(np.float64)
            pos += 32 * nr
            out.append(Sample(depth, [GraspRect(v) for v in verts], sid, src))
    except (struct.error, ValueError) as exc:
        raise FormatError(f"{path}: truncated sample record") from exc
    return out
