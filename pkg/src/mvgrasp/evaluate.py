"""Rectangle-metric evaluation and inference latency benchmarking."""

import csv
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import GraspRect, network_input
from .errors import EmptyInputError, GeometryError
from .grasp import Grasp2D, decode_best_grasps, predict_grasp_map

IOU_THRESHOLD = 0.25
ANGLE_THRESHOLD_DEG = 30.0


# ------------------------------------------------------------------ polygons


def polygon_area(poly):
    """Signed shoelace area (positive for counter-clockwise in x-right/y-up)."""
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _ccw(poly):
    return poly if polygon_area(poly) >= 0 else poly[::-1]


def clip_polygon(subject, clip):
    """Sutherland-Hodgman: ``subject`` clipped by the convex polygon ``clip`` (both CCW)."""
    out = [tuple(p) for p in subject]
    n = len(clip)
    for i in range(n):
        if not out:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay

        def side(p):
            return ex * (p[1] - ay) - ey * (p[0] - ax)

        inp, out = out, []
        prev = inp[-1]
        sp = side(prev)
        for cur in inp:
            sc = side(cur)
            if sc >= 0:
                if sp < 0:
                    t = sp / (sp - sc)
                    out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
                out.append(cur)
            elif sp >= 0:
                t = sp / (sp - sc)
                out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
            prev, sp = cur, sc
    return np.array(out, dtype=np.float64).reshape(-1, 2)


def rect_iou(a, b):
    pa, pb = _ccw(a.vertices), _ccw(b.vertices)
    area_a, area_b = polygon_area(pa), polygon_area(pb)
    if area_a <= 0 or area_b <= 0:
        raise GeometryError("rect_iou needs rectangles with positive area")
    inter = max(polygon_area(clip_polygon(pa, pb)), 0.0)
    union = area_a + area_b - inter
    return float(min(max(inter / union, 0.0), 1.0))


def angle_difference(phi_a, phi_b):
    """Distance between two grasp angles modulo pi (parallel-jaw symmetry), radians."""
    d = abs(phi_a - phi_b) % math.pi
    return min(d, math.pi - d)


def grasp_success(pred, gts, iou_threshold=IOU_THRESHOLD, angle_threshold_deg=ANGLE_THRESHOLD_DEG):
    if not gts:
        raise EmptyInputError("grasp_success needs at least one ground-truth rectangle")
    limit = math.radians(angle_threshold_deg)
    for gt in gts:
        if angle_difference(pred.angle, gt.angle) < limit and rect_iou(pred, gt) > iou_threshold:
            return True
    return False


def grasp2d_to_rect(g, plate_height_px=None):
    """Rectangle centered on the grasp; default plate height is half the width."""
    h = 0.5 * g.width if plate_height_px is None else plate_height_px
    return GraspRect.from_params(g.v, g.u, g.phi, g.width, h)


# ------------------------------------------------------------------ evaluation


@dataclass
class SampleResult:
    id: str
    success: bool
    best_iou: float
    angle_diff_deg: float
    grasp: dict = None


@dataclass
class Metrics:
    iou_success_rate: float
    n_success: int
    n_total: int
    mean_latency_ms: float = None
    p95_latency_ms: float = None
    records: list = field(default_factory=list)

    def to_dict(self, include_records=True):
        d = asdict(self)
        if not include_records:
            d.pop("records")
        return d

    def to_json(self, include_records=True):
        return json.dumps(self.to_dict(include_records), indent=2)

    def table(self):
        lines = [
            f"{'metric':<22}{'value':>12}",
            f"{'IoU success rate':<22}{100 * self.iou_success_rate:>11.2f}%",
            f"{'successes / total':<22}{f'{self.n_success}/{self.n_total}':>12}",
        ]
        if self.mean_latency_ms is not None:
            lines.append(f"{'mean latency (ms)':<22}{self.mean_latency_ms:>12.2f}")
            lines.append(f"{'p95 latency (ms)':<22}{self.p95_latency_ms:>12.2f}")
        return "\n".join(lines)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "success", "best_iou", "angle_diff_deg"])
            for r in self.records:
                w.writerow([r.id, int(r.success), f"{r.best_iou:.6f}", f"{r.angle_diff_deg:.6f}"])


def network_predictor(net, w_max_px, tau=0.0):
    """Top-1 decoded grasp of ``net`` for a dataset sample (None if below ``tau``)."""

    def predict(sample):
        gmap = predict_grasp_map(net, network_input(sample)[0], w_max=w_max_px)
        found = decode_best_grasps(gmap, k=1, tau=tau)
        return found[0] if found else None

    return predict


def _score(pred_rect, gts):
    best_iou, best_angle = 0.0, 180.0
    for gt in gts:
        best_iou = max(best_iou, rect_iou(pred_rect, gt))
        best_angle = min(best_angle, math.degrees(angle_difference(pred_rect.angle, gt.angle)))
    return best_iou, best_angle


def evaluate(model, samples, tau=0.0, w_max_px=None, plate_height_px=None, timing=True):
    """Success rate of top-1 grasps over ``samples``.

    ``model`` is a :class:`~mvgrasp.network.Network` (then ``w_max_px`` is
    required) or a callable ``sample -> Grasp2D | GraspRect | None``.
    """
    samples = list(samples)
    if not samples:
        raise EmptyInputError("evaluate needs a non-empty sample set")
    if callable(model) and not hasattr(model, "forward"):
        predict = model
    else:
        if w_max_px is None:
            raise ValueError("w_max_px is required when evaluating a network")
        predict = network_predictor(model, w_max_px, tau)
    predict(samples[0])  # warmup, not timed
    records, latencies = [], []
    for s in samples:
        t0 = time.perf_counter()
        pred = predict(s)
        latencies.append(1000.0 * (time.perf_counter() - t0))
        if pred is None:
            records.append(SampleResult(s.id, False, 0.0, 180.0))
            continue
        rect = pred if isinstance(pred, GraspRect) else grasp2d_to_rect(pred, plate_height_px)
        ok = rect.area > 0 and grasp_success(rect, list(s.rects))
        iou, ang = _score(rect, s.rects) if rect.area > 0 else (0.0, 180.0)
        info = asdict(pred) if isinstance(pred, Grasp2D) else None
        records.append(SampleResult(s.id, bool(ok), iou, ang, info))
    n_ok = sum(r.success for r in records)
    m = Metrics(n_ok / len(records), n_ok, len(records), records=records)
    if timing:
        m.mean_latency_ms = float(np.mean(latencies))
        m.p95_latency_ms = float(np.percentile(latencies, 95))
    return m


# ------------------------------------------------------------------ latency


def benchmark_inference(net, input_shape=(120, 120), iters=50, warmup=5, seed=0, decode=True):
    """Per-iteration wall time (ms) of forward (+ decode) on one random input."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(input_shape).astype(np.float32)

    def once():
        gmap = predict_grasp_map(net, x)
        if decode:
            decode_best_grasps(gmap, k=1, tau=0.0)

    for _ in range(warmup):
        once()
    records = []
    for _ in range(iters):
        t0 = time.perf_counter()
        once()
        records.append(1000.0 * (time.perf_counter() - t0))
    threads = None
    try:
        from threadpoolctl import threadpool_info

        threads = max((i.get("num_threads", 1) for i in threadpool_info()), default=1)
    except ImportError:  # pragma: no cover
        threads = os.cpu_count()
    from ._kernels import get_backend

    return {
        "input_shape": list(input_shape),
        "iters": iters,
        "warmup": warmup,
        "records_ms": records,
        "mean_ms": float(np.mean(records)),
        "p95_ms": float(np.percentile(records, 95)),
        "max_ms": float(np.max(records)),
        "threads": threads,
        "precision": str(net.dtype),
        "backend": get_backend(),
    }
