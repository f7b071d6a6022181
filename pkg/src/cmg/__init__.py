"""Crowd motion generation toolkit.

Plans event-driven crowd scenes (group division, activity assignment,
trajectory response patterns) and synthesizes per-agent human motion with a
spatially controllable diffusion model, plus an evaluation metric suite.

Layout:

- :mod:`cmg.diffusion` — noise schedules, forward/reverse steps, respacing.
- :mod:`cmg.motion` / :mod:`cmg.skeleton` — motion representations and
  skeletal kinematics.
- :mod:`cmg.denoiser` — the control-conditioned denoiser and checkpoints.
- :mod:`cmg.losses` / :mod:`cmg.training` — training objective and loop.
- :mod:`cmg.guidance` / :mod:`cmg.sampling` — inference-time correction and
  the sampler.
- :mod:`cmg.planner` — crowd scene planning and event response patterns.
- :mod:`cmg.metrics` — motion quality and control accuracy metrics.
- :mod:`cmg.io` / :mod:`cmg.config` — file formats and run configuration.
- :mod:`cmg.cli` / :mod:`cmg.service` — command line and HTTP surfaces.
"""

from .diffusion import DiffusionSchedule, build_schedule
from .errors import (
    CmgError,
    LLMError,
    LLMHTTPError,
    LLMSchemaError,
    LLMTimeoutError,
    MotionFileError,
    SchemaError,
    TrainingDivergedError,
    ValidationError,
)
from .motion import GlobalMotion, RelativeMotion, global_to_relative, relative_to_global
from .skeleton import Skeleton, default_skeleton

__version__ = "0.1.0"

__all__ = [
    "CmgError",
    "DiffusionSchedule",
    "GlobalMotion",
    "LLMError",
    "LLMHTTPError",
    "LLMSchemaError",
    "LLMTimeoutError",
    "MotionFileError",
    "RelativeMotion",
    "SchemaError",
    "Skeleton",
    "TrainingDivergedError",
    "ValidationError",
    "__version__",
    "build_schedule",
    "default_skeleton",
    "global_to_relative",
    "relative_to_global",
]
