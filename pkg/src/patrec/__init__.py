"""Model-based photoacoustic tomography reconstruction toolkit."""

from .admm import AdmmConfig, AdmmState, CostBreakdown, admm_partial, admm_solve, eval_cost
from .forward import (
    ForwardOperator,
    Measurement,
    OperatorSplit,
    TimeSampling,
    TransducerGeometry,
    build_operator,
    simulate_measurement,
    split_rows,
)
from .grid import ImageGrid, scanline
from .metrics import MethodComparison, OracleResult, SsimConfig, compare_methods, oracle_tune, ssim
from .phantoms import PhantomKind, PhantomSpec, generate_phantom
from .regularizers import (
    DerivativeStack,
    clip_box,
    eval_augmented,
    eval_tikhonov,
    eval_tv2,
    group_norm,
    prox_group,
    solve_tikhonov,
)
from .tracking import (
    ProbeRecord,
    TrackingConfig,
    TrackingResult,
    relative_smoothness,
    track_and_reconstruct,
    track_full,
    track_partial,
)

__version__ = "0.1.0"

__all__ = [
    "AdmmConfig",
    "AdmmState",
    "CostBreakdown",
    "DerivativeStack",
    "ForwardOperator",
    "ImageGrid",
    "Measurement",
    "MethodComparison",
    "OperatorSplit",
    "OracleResult",
    "PhantomKind",
    "PhantomSpec",
    "ProbeRecord",
    "SsimConfig",
    "TimeSampling",
    "TrackingConfig",
    "TrackingResult",
    "TransducerGeometry",
    "admm_partial",
    "admm_solve",
    "build_operator",
    "clip_box",
    "compare_methods",
    "eval_augmented",
    "eval_cost",
    "eval_tikhonov",
    "eval_tv2",
    "generate_phantom",
    "group_norm",
    "oracle_tune",
    "prox_group",
    "relative_smoothness",
    "scanline",
    "simulate_measurement",
    "solve_tikhonov",
    "split_rows",
    "ssim",
    "track_and_reconstruct",
    "track_full",
    "track_partial",
]
