"""PNG export of depth views and grasp maps."""

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .projection import DepthView, NormalizedView


def save_depth_png(view, path):
    """16-bit grayscale PNG with linear min-max scaling; returns the sidecar dict.

    Occupied values map to [1, 65535]; empty bins (non-finite) are 0.  The
    scaling is written next to the image as ``<name>.json``.
    """
    if isinstance(view, (DepthView, NormalizedView)):
        pixels = np.asarray(view.pixels, dtype=np.float64)
    else:
        pixels = np.asarray(view, dtype=np.float64)
    occ = np.isfinite(pixels)
    lo = float(pixels[occ].min()) if occ.any() else 0.0
    hi = float(pixels[occ].max()) if occ.any() else 0.0
    span = hi - lo if hi > lo else 1.0
    img = np.zeros(pixels.shape, dtype=np.uint16)
    img[occ] = np.round(1 + (pixels[occ] - lo) / span * 65534).astype(np.uint16)
    path = Path(path)
    Image.fromarray(img).save(path)
    meta = {"min": lo, "max": hi, "background_code": 0, "code_range": [1, 65535]}
    if isinstance(view, DepthView):
        meta.update(axis=view.axis, l=view.grid.l, bin_size=view.grid.bin_size)
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2))
    return meta


def decode_depth_png(path):
    """Invert :func:`save_depth_png` (background back to +inf)."""
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    code = np.asarray(Image.open(path), dtype=np.float64)
    span = meta["max"] - meta["min"] if meta["max"] > meta["min"] else 1.0
    out = meta["min"] + (code - 1) / 65534 * span
    out[code == 0] = np.inf
    return out


def save_heatmap_png(values, path, vmin=None, vmax=None, cmap="viridis"):
    from matplotlib import colormaps

    values = np.asarray(values, dtype=np.float64)
    finite = np.isfinite(values)
    vmin = float(values[finite].min()) if vmin is None and finite.any() else (vmin or 0.0)
    vmax = float(values[finite].max()) if vmax is None and finite.any() else (vmax or 1.0)
    span = vmax - vmin if vmax > vmin else 1.0
    norm = np.clip((np.where(finite, values, vmin) - vmin) / span, 0.0, 1.0)
    rgba = colormaps[cmap](norm)
    Image.fromarray((rgba[..., :3] * 255).round().astype(np.uint8)).save(path)


def save_grasp_map_pngs(gmap, directory, prefix=""):
    """Quality, angle and width heatmaps; returns the written paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = {
        "quality": directory / f"{prefix}quality.png",
        "angle": directory / f"{prefix}angle.png",
        "width": directory / f"{prefix}width.png",
    }
    save_heatmap_png(gmap.quality, out["quality"], 0.0, 1.0)
    save_heatmap_png(gmap.angle, out["angle"], -np.pi / 2, np.pi / 2, cmap="twilight")
    save_heatmap_png(gmap.width, out["width"], 0.0, gmap.w_max)
    return out


def save_grasp_map_npz(gmap, path):
    np.savez(path, quality=gmap.quality, sin2phi=gmap.sin2phi, cos2phi=gmap.cos2phi,
             width=gmap.width, w_max=np.array(gmap.w_max))


def load_grasp_map_npz(path):
    from .grasp import GraspMap

    with np.load(path) as z:
        return GraspMap(z["quality"], z["sin2phi"], z["cos2phi"], z["width"], float(z["w_max"]))
