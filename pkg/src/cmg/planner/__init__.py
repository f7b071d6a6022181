"""Crowd scene planning: groups, activities, events, trajectories."""

from .activities import CATALOG, pick_activity
from .events import apply_event, interpret_event
from .llm import LLMResult, PlannerLLMClient, llm_request
from .scene import anchor_layout, divide_groups, match_generator, plan_scene
from .trajectory import (
    AgentTrack,
    catmull_rom,
    clamp_speed,
    densify,
    trajectories_to_control,
)
from .types import (
    DEFAULT_EPS_RETURN,
    DEFAULT_QUEUE_SPACING,
    DEFAULT_V_MAX,
    FORMATIONS,
    PATTERNS,
    PLAN_VERSION,
    CrowdParams,
    EventSpec,
    Group,
    ScenePlan,
)

__all__ = [
    "AgentTrack",
    "CATALOG",
    "CrowdParams",
    "DEFAULT_EPS_RETURN",
    "DEFAULT_QUEUE_SPACING",
    "DEFAULT_V_MAX",
    "EventSpec",
    "FORMATIONS",
    "Group",
    "LLMResult",
    "PATTERNS",
    "PLAN_VERSION",
    "PlannerLLMClient",
    "ScenePlan",
    "anchor_layout",
    "apply_event",
    "catmull_rom",
    "clamp_speed",
    "densify",
    "divide_groups",
    "interpret_event",
    "llm_request",
    "match_generator",
    "pick_activity",
    "plan_scene",
    "trajectories_to_control",
]
