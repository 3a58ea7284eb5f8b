"""Gaze accuracy requirements and scanpath-context experiments on egocentric recordings."""

__version__ = "0.1.0"

from .analysis import SpaceConfig, build_report, collect_size_samples, emit_report
from .errors import DomainError, FormatError, GazeCtxError, ValidationError
from .experiments import bootstrap_ci, emit_results, run_sweep, sample_e1_trials, sample_e2_trials
from .gaze import DetectorConfig, Scanpath, build_scanpath, detect_fixations
from .geometry import CameraModel, ObjectShape, Pose, project_object, visual_size
from .scene import Recording, load_recording, save_recording, validate
from .synthgen import SynthConfig, generate, perturb_gaze

__all__ = [
    "CameraModel",
    "DetectorConfig",
    "DomainError",
    "FormatError",
    "GazeCtxError",
    "ObjectShape",
    "Pose",
    "Recording",
    "Scanpath",
    "SpaceConfig",
    "SynthConfig",
    "ValidationError",
    "bootstrap_ci",
    "build_report",
    "build_scanpath",
    "collect_size_samples",
    "detect_fixations",
    "emit_report",
    "emit_results",
    "generate",
    "load_recording",
    "perturb_gaze",
    "project_object",
    "run_sweep",
    "sample_e1_trials",
    "sample_e2_trials",
    "save_recording",
    "validate",
    "visual_size",
]
