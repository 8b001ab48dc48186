"""Monte Carlo optical centroid measurement with finite-size detector arrays."""
from .analysis import RecoveryReport, close_event_analysis, recover
from .detection import CentroidHistogram, DetectorArray, ShiftPlan, run_plan
from .sampler import EventBatch, sample_events, split_batch
from .states import CatState, JointGaussianState, NoonState, state_from_dict

__version__ = "0.1.0"

__all__ = [
    "NoonState",
    "JointGaussianState",
    "CatState",
    "state_from_dict",
    "EventBatch",
    "sample_events",
    "split_batch",
    "DetectorArray",
    "ShiftPlan",
    "CentroidHistogram",
    "run_plan",
    "RecoveryReport",
    "recover",
    "close_event_analysis",
]
