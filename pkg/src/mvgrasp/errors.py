"""Exception hierarchy shared by every stage of the pipeline."""


class MVGraspError(Exception):
    """Base class for all package errors."""


class FormatError(MVGraspError, ValueError):
    """A file or record does not follow its documented format."""


class EmptyInputError(MVGraspError, ValueError):
    """An operation received (or produced) no usable elements."""


class GeometryError(MVGraspError, ValueError):
    """Degenerate geometry, e.g. a point cloud with zero covariance."""


class ShapeError(MVGraspError, ValueError):
    """Tensor or grid shapes are inconsistent."""


class SpecError(MVGraspError, ValueError):
    """A network or grid specification violates its invariants."""


class NumericError(MVGraspError, FloatingPointError):
    """A non-finite value appeared during a numeric computation."""


class StateError(MVGraspError, RuntimeError):
    """An object is used in a state it does not support yet."""


class WeightFileError(MVGraspError, ValueError):
    """A weight file is corrupt, truncated or of an unsupported version."""


class NoFeasibleViewError(MVGraspError):
    """Every candidate view was rejected by the feasibility predicate."""


class StageError(MVGraspError):
    """Wraps a failure inside one pipeline stage and names that stage."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
