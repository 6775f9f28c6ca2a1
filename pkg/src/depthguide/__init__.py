"""Importance-guided adaptive sampling of depth measurements."""

from .errors import (
    DegenerateSitesError,
    DepthGuideError,
    DimensionMismatchError,
    DuplicateCoordinateError,
    EmptyDomainError,
    FamilyError,
    FormatError,
    InfeasibleSceneError,
    InsufficientPixelsError,
    MissingInputError,
    OutOfBoundsError,
    PredictionError,
)
from .frames import (
    DepthFormat,
    DepthFrame,
    FrameworkConfig,
    GuideImage,
    QMap,
    SamplePattern,
    default_budget,
    load_depth,
    load_guide,
    load_pattern,
    load_qmap,
    save_depth,
    save_guide,
    save_pattern,
    save_qmap,
)
from .harness import EvalRecord, SuiteResult, evaluate_frame, evaluate_suite
from .metrics import Metric, aggregate, pointwise_q
from .patterns import (
    KernelParams,
    SlicParams,
    blend_with_grid,
    gaussian_sampling,
    grid_pattern,
    kernel_value,
    random_pattern,
    slic,
    superpixel_pattern,
)
from .predictors import Predictor, PredictorKind, predict, reconstruct
from .qmap import EstimatorKind, QEstimator, compute_q, estimate_qhat, q_convergence
from .scenes import Scene, SceneSpec, generate_scene, generate_suite
from .toy1d import Signal1D, toy_run

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
