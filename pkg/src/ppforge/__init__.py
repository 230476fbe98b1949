"""Learned table-tennis striking with style-guided reinforcement.

Pipeline: drag-and-teach demo clips (fdcc), speed augmentation (motion),
adversarial style rewards (style), PPO with an asymmetric critic
(training), and evaluation across two dynamics backends (evaluation).
"""

__version__ = "0.1.0"

from .configio import ConfigError, RunConfig, parse_config
from .envs import PingPongEnv, VectorEnv
from .evaluation import dtw_distance, eval_success
from .motion import MotionClip, augment_clip, build_dataset
from .training import Trainer, load_policy

__all__ = [
    "ConfigError", "RunConfig", "parse_config", "PingPongEnv", "VectorEnv",
    "dtw_distance", "eval_success", "MotionClip", "augment_clip",
    "build_dataset", "Trainer", "load_policy", "__version__",
]
