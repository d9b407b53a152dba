"""Gait-based emotion perception and expressive virtual agents."""
from __future__ import annotations

from .classifier import SvmModel, TrainingConfig, cross_validate, predict, predict_raw, train
from .errors import DataError, ParseError
from .features import FEATURE_NAMES, N_FEATURES, extract_features, fit_normalization, normalize
from .gaze import GazeAngles, GazeConfig, GazeContext, apply_gaze, gaze_target, smooth_gaze
from .gea import EMOTIONS, Emotion, GaitEmotionAssociation, build_gea, gea_lookup
from .navigation import NavAgent, NavWorld, compute_new_velocity, preferred_speed, step
from .simulator import AgentSpec, SimConfig, simulate
from .skeleton import JOINT_NAMES, Gait, JointId, extract_walk_cycle, import_bvh, load_gait, save_gait

__version__ = "0.1.0"

__all__ = [
    "AgentSpec", "DataError", "EMOTIONS", "Emotion", "FEATURE_NAMES", "Gait", "GaitEmotionAssociation",
    "GazeAngles", "GazeConfig", "GazeContext", "JOINT_NAMES", "JointId", "N_FEATURES", "NavAgent", "NavWorld",
    "ParseError", "SimConfig", "SvmModel", "TrainingConfig", "apply_gaze", "build_gea", "compute_new_velocity",
    "cross_validate", "extract_features", "extract_walk_cycle", "fit_normalization", "gaze_target", "gea_lookup",
    "import_bvh", "load_gait", "normalize", "predict", "predict_raw", "preferred_speed", "save_gait", "simulate",
    "smooth_gaze", "step", "train",
]
