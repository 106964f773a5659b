"""Point cloud to ranked 3D grasps in one call."""

import logging
from contextlib import contextmanager, nullcontext
from dataclasses import dataclass, field

from .errors import EmptyInputError, MVGraspError, StageError
from .geometry import DEFAULT_GRAVITY, compute_reference_frame, transform_to_frame
from .grasp import W_MAX_M, decode_best_grasps, grasp_2d_to_3d, predict_grasp_map
from .network import load_network
from .projection import GridSpec, generate_views, normalize_view
from .viewselect import select_view

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    gravity: tuple = DEFAULT_GRAVITY
    tau: float = 0.8
    k: int = 10
    delta: float = 0.005
    w_max: float = W_MAX_M
    weights: str = None
    feasibility: str = "all"
    deterministic: bool = True

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass
class PipelineResult:
    ranking: object
    grasp_map: object
    grasps: list
    frame: object = None
    object_cloud: object = None
    views: list = None
    normalized: object = None

    def __iter__(self):
        return iter((self.ranking, self.grasp_map, self.grasps))

    @property
    def selected_view(self):
        return next(v for v in self.views if v.axis == self.ranking.selected)


@contextmanager
def _stage(name):
    try:
        yield
    except MVGraspError as exc:
        if isinstance(exc, StageError):
            raise
        raise StageError(name, exc) from exc


def single_threaded():
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return nullcontext()
    return threadpool_limits(1)


def run_pipeline(cloud, cfg=None, net=None, feasible=None):
    """Frame -> three views -> entropy selection -> grasp map -> ranked 3D grasps.

    ``net`` overrides ``cfg.weights``; ``feasible`` (a predicate on the axis
    name) overrides the named ``cfg.feasibility`` policy.
    """
    cfg = cfg or PipelineConfig()
    if net is None:
        if cfg.weights is None:
            raise ValueError("run_pipeline needs a network or cfg.weights")
        with _stage("weights"):
            net, _ = load_network(cfg.weights)
    with single_threaded() if cfg.deterministic else nullcontext():
        with _stage("frame"):
            frame = compute_reference_frame(cloud, cfg.gravity)
            local = transform_to_frame(cloud, frame)
        with _stage("projection"):
            views = generate_views(local, cfg.grid)
        with _stage("selection"):
            ranking = select_view(views, feasible or cfg.feasibility)
        view = next(v for v in views if v.axis == ranking.selected)
        with _stage("normalization"):
            normalized = normalize_view(view)
        with _stage("inference"):
            gmap = predict_grasp_map(net, normalized, cfg.w_max)
        with _stage("decode"):
            candidates = decode_best_grasps(gmap, cfg.k, cfg.tau)
        grasps = []
        with _stage("lift"):
            for g in candidates:
                try:
                    grasps.append(grasp_2d_to_3d(g, view, frame, cfg.delta))
                except EmptyInputError:
                    log.info("dropping grasp at (%d, %d): no surface within %.4f m", g.u, g.v, cfg.delta)
    return PipelineResult(ranking, gmap, grasps, frame, local, views, normalized)
