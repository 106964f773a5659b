"""Fixed-scale orthographic depth views of an object-frame point cloud.

Each view has an image basis ``(e_col, e_row, e_look)`` expressed in the
object frame.  A point ``p`` has in-plane coordinates ``a = p . e_col`` and
``b = p . e_row`` and depth ``p . e_look``, so smaller depth is closer to the
virtual camera.  The plane is centered on the object origin and spans
``l * bin_size`` meters; bins are half-open and indexed by floor.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import EmptyInputError, SpecError

log = logging.getLogger(__name__)

AXES = ("XoY", "XoZ", "YoZ")
BACKGROUND = np.inf

# columns: image column direction, image row direction, camera look direction
VIEW_BASES = {
    "XoY": np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]]).T,
    "XoZ": np.array([[-1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, -1.0, 0.0]]).T,
    "YoZ": np.array([[0.0, 1.0, 0.0], [0.0, 0.0, -1.0], [-1.0, 0.0, 0.0]]).T,
}


@dataclass(frozen=True)
class GridSpec:
    l: int = 120
    bin_size: float = 0.005

    def __post_init__(self):
        if int(self.l) != self.l or self.l < 12 or self.l % 12:
            raise SpecError(f"grid side l must be a positive multiple of 12, got {self.l}")
        if not self.bin_size > 0:
            raise SpecError(f"bin_size must be > 0, got {self.bin_size}")

    @property
    def side(self):
        return self.l * self.bin_size

    def pixel_centers(self, idx):
        """In-plane coordinate (m) of the center of bin ``idx``."""
        return -0.5 * self.side + (np.asarray(idx, dtype=np.float64) + 0.5) * self.bin_size


@dataclass(frozen=True)
class DepthView:
    pixels: np.ndarray
    axis: str
    grid: GridSpec
    basis: np.ndarray = field(repr=False)
    n_outside: int = 0

    @property
    def occupied_mask(self):
        return np.isfinite(self.pixels)

    @property
    def approach_axis(self):
        """Camera look direction in the object frame."""
        return self.basis[:, 2].copy()

    @property
    def far_depth(self):
        """Far face of the cubic view volume centered on the object origin."""
        return 0.5 * self.grid.side

    def view_to_object(self, coords):
        """Map view coordinates ``(a, b, depth)`` (rows of ``coords``) to the object frame."""
        return np.asarray(coords, dtype=np.float64) @ self.basis.T

    def pixel_to_object(self, row, col, depth):
        a = self.grid.pixel_centers(col)
        b = self.grid.pixel_centers(row)
        return self.view_to_object(np.stack(np.broadcast_arrays(a, b, depth), axis=-1))


@dataclass(frozen=True)
class NormalizedView:
    pixels: np.ndarray
    source: DepthView = field(repr=False)
    mean: float = 0.0
    std: float = 1.0


def view_coordinates(points, axis):
    return np.asarray(points, dtype=np.float64) @ VIEW_BASES[axis]


def project(cloud, axis, grid=None):
    """Z-buffer ``cloud`` (object frame) onto the ``axis`` plane."""
    grid = grid or GridSpec()
    if axis not in VIEW_BASES:
        raise ValueError(f"unknown view axis {axis!r}; expected one of {AXES}")
    abd = view_coordinates(cloud.points, axis)
    half = 0.5 * grid.side
    col = np.floor((abd[:, 0] + half) / grid.bin_size).astype(np.int64)
    row = np.floor((abd[:, 1] + half) / grid.bin_size).astype(np.int64)
    inside = (row >= 0) & (row < grid.l) & (col >= 0) & (col < grid.l)
    n_out = int((~inside).sum())
    if not inside.any():
        raise EmptyInputError(f"{axis}: no point falls inside the {grid.side:.3f} m projection plane")
    if n_out:
        log.debug("%s: %d points outside the projection plane", axis, n_out)
    flat = row[inside] * grid.l + col[inside]
    buf = _kernels.zbuffer(flat, abd[inside, 2], grid.l * grid.l)
    pixels = buf.reshape(grid.l, grid.l)
    pixels.setflags(write=False)
    basis = VIEW_BASES[axis].copy()
    basis.setflags(write=False)
    return DepthView(pixels, axis, grid, basis, n_out)


def generate_views(cloud, grid=None):
    """The three orthographic views in fixed order XoY, XoZ, YoZ."""
    return [project(cloud, axis, grid) for axis in AXES]


def filled_pixels(view):
    """Depth grid with empty bins set to the deepest occupied value."""
    occ = view.occupied_mask
    far = view.pixels[occ].max() if occ.any() else 0.0
    return np.where(occ, view.pixels, far)


def standardize(values):
    """(values - mean) / std; ``std`` is replaced by 1 for constant input."""
    values = np.asarray(values, dtype=np.float64)
    mean = float(values.mean())
    std = float(values.std())
    if std < 1e-12:
        std = 1.0
    return (values - mean) / std, mean, std


def normalize_view(view):
    pixels, mean, std = standardize(filled_pixels(view))
    return NormalizedView(pixels, view, mean, std)
