"""Multi-view grasp detection: point cloud -> orthographic views -> grasp map -> 3D grasp."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    EmptyInputError,
    FormatError,
    GeometryError,
    MVGraspError,
    NoFeasibleViewError,
    NumericError,
    ShapeError,
    SpecError,
    StageError,
    StateError,
    WeightFileError,
)
from .geometry import PointCloud, ReferenceFrame, compute_reference_frame, load_point_cloud, transform_to_frame  # noqa: E402
from .grasp import Grasp2D, Grasp3D, GraspMap, decode_best_grasps, grasp_2d_to_3d, predict_grasp_map  # noqa: E402
from .network import Network, NetworkSpec, build_network, load_network, save_network  # noqa: E402
from .pipeline import PipelineConfig, PipelineResult, run_pipeline  # noqa: E402
from .projection import DepthView, GridSpec, NormalizedView, generate_views, normalize_view, project  # noqa: E402
from .viewselect import ViewRanking, select_view, view_entropy  # noqa: E402
