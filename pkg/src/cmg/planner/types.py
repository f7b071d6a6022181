"""Domain types for crowd scene planning.

A :class:`ScenePlan` is the planner's product: agents partitioned into
groups, each group assigned an activity text and a ground-plane anchor, and
a dense spatial control block (per-agent, per-frame, per-joint targets plus
a binary mask marking which entries are meaningful).

Ground-plane coordinates are (x, z); the vertical axis is y.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError
from ..motion import DEFAULT_FPS

PATTERNS = ("Following", "Avoiding", "Queuing", "Encircling", "Passing", "Random")
FORMATIONS = ("cluster", "circle", "line", "pair")

PLAN_VERSION = "cmg_plan_v1"

DEFAULT_V_MAX = 1.5  # meters per second, pelvis speed ceiling
DEFAULT_EPS_RETURN = 0.1  # meters, Passing return-to-path tolerance
DEFAULT_ARENA_BASE = 4.0  # meters, base anchor spacing before density scaling
DEFAULT_QUEUE_SPACING = 0.8  # meters between queue slots
DEFAULT_HAND_DISTANCE = 0.2  # meters between paired hands
INTERACTION_ALPHA = 0.7  # interaction intensity at which hand constraints kick in


@dataclass(frozen=True)
class CrowdParams:
    """Crowd-level knobs: count, grouping, density, interaction intensity."""

    n: int
    s: float
    sigma: float
    alpha: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValidationError(f"n must be an integer >= 1, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        if not (0 < self.s <= self.n):
            raise ValidationError(f"s must satisfy 0 < s <= n, got s={self.s} n={self.n}")
        if not 0.0 <= self.sigma <= 1.0:
            raise ValidationError(f"sigma must lie in [0, 1], got {self.sigma}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"alpha must lie in [0, 1], got {self.alpha}")

    def to_dict(self) -> dict:
        return {"n": self.n, "s": float(self.s), "sigma": float(self.sigma),
                "alpha": float(self.alpha)}

    @staticmethod
    def from_dict(doc: dict) -> "CrowdParams":
        return CrowdParams(n=doc["n"], s=doc["s"], sigma=doc["sigma"], alpha=doc["alpha"])


@dataclass
class Group:
    """One activity group: members, activity text, anchor and formation.

    ``interaction_joints`` lists paired-joint constraints as tuples
    (agent_a, joint_a, agent_b, joint_b, distance_m).
    """

    id: int
    members: list[int]
    activity_text: str
    anchor: np.ndarray  # (2,) ground-plane (x, z)
    formation: str = "cluster"
    interaction_joints: list[tuple[int, int, int, int, float]] = field(default_factory=list)

    def __post_init__(self):
        self.anchor = np.asarray(self.anchor, dtype=np.float64).reshape(2)
        if not self.members:
            raise ValidationError(f"group {self.id} has no members")
        if len(set(self.members)) != len(self.members):
            raise ValidationError(f"group {self.id} has duplicate members")
        if self.formation not in FORMATIONS:
            raise ValidationError(
                f"formation must be one of {FORMATIONS}, got {self.formation!r}"
            )
        if not np.all(np.isfinite(self.anchor)):
            raise ValidationError(f"group {self.id} anchor is not finite")

    def to_dict(self) -> dict:
        return {
            "id": int(self.id),
            "members": [int(m) for m in self.members],
            "activity": self.activity_text,
            "anchor": [float(self.anchor[0]), float(self.anchor[1])],
            "formation": self.formation,
            "interaction_joints": [
                [int(a), int(ja), int(b), int(jb), float(d)]
                for a, ja, b, jb, d in self.interaction_joints
            ],
        }

    @staticmethod
    def from_dict(doc: dict) -> "Group":
        return Group(
            id=doc["id"],
            members=list(doc["members"]),
            activity_text=doc["activity"],
            anchor=np.asarray(doc["anchor"], dtype=np.float64),
            formation=doc.get("formation", "cluster"),
            interaction_joints=[tuple(row) for row in doc.get("interaction_joints", [])],
        )


@dataclass
class EventSpec:
    """A perturbation event and the response pattern it triggers.

    Required fields depend on the pattern: Following needs ``leader_agent``;
    Avoiding and Passing need ``direction`` and ``radius``; Queuing needs
    ``direction`` (``spacing`` defaults to 0.8 m); Encircling needs
    ``radius``.  ``direction`` is a ground-plane velocity in m/s for
    Avoiding/Passing (the obstacle's motion) and a unit-normalized axis for
    Queuing.
    """

    pattern: str
    epicenter: np.ndarray  # (2,) ground plane
    onset_frame: int
    duration_frames: int
    direction: np.ndarray | None = None  # (2,)
    radius: float | None = None
    leader_agent: int | None = None
    spacing: float = DEFAULT_QUEUE_SPACING

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise ValidationError(
                f"unknown pattern {self.pattern!r}; expected one of {PATTERNS}"
            )
        self.epicenter = np.asarray(self.epicenter, dtype=np.float64).reshape(2)
        if self.direction is not None:
            self.direction = np.asarray(self.direction, dtype=np.float64).reshape(2)
        if self.onset_frame < 0:
            raise ValidationError("onset_frame must be >= 0")
        if self.duration_frames < 1:
            raise ValidationError("duration_frames must be >= 1")
        if self.spacing <= 0:
            raise ValidationError("spacing must be > 0")
        needs_direction = self.pattern in ("Avoiding", "Passing", "Queuing")
        if needs_direction and self.direction is None:
            raise ValidationError(f"{self.pattern} requires a direction vector")
        if needs_direction and float(np.hypot(*self.direction)) == 0.0 and self.pattern == "Queuing":
            raise ValidationError("Queuing direction must be non-zero")
        if self.pattern in ("Avoiding", "Passing", "Encircling"):
            if self.radius is None or self.radius <= 0:
                raise ValidationError(f"{self.pattern} requires radius > 0")
        if self.pattern == "Following" and self.leader_agent is None:
            raise ValidationError("Following requires leader_agent")

    def to_dict(self) -> dict:
        return {
            "pattern": self.pattern,
            "epicenter": [float(self.epicenter[0]), float(self.epicenter[1])],
            "onset_frame": int(self.onset_frame),
            "duration_frames": int(self.duration_frames),
            "direction": None if self.direction is None
            else [float(self.direction[0]), float(self.direction[1])],
            "radius": None if self.radius is None else float(self.radius),
            "leader_agent": None if self.leader_agent is None else int(self.leader_agent),
            "spacing": float(self.spacing),
        }

    @staticmethod
    def from_dict(doc: dict) -> "EventSpec":
        return EventSpec(
            pattern=doc["pattern"],
            epicenter=np.asarray(doc["epicenter"], dtype=np.float64),
            onset_frame=doc["onset_frame"],
            duration_frames=doc["duration_frames"],
            direction=None if doc.get("direction") is None
            else np.asarray(doc["direction"], dtype=np.float64),
            radius=doc.get("radius"),
            leader_agent=doc.get("leader_agent"),
            spacing=doc.get("spacing", DEFAULT_QUEUE_SPACING),
        )


@dataclass
class ScenePlan:
    """A complete crowd plan: groups plus the derived spatial control block.

    ``control`` is (n, f, J, 3) absolute world targets, ``mask`` is
    (n, f, J) binary; a mask entry is 1 exactly when the corresponding
    control row was written by the planner.
    """

    params: CrowdParams
    groups: list[Group]
    control: np.ndarray
    mask: np.ndarray
    fps: float = DEFAULT_FPS
    frames: int = 0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.control = np.asarray(self.control, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=np.float64)
        n = self.params.n
        if self.control.ndim != 4 or self.control.shape[0] != n:
            raise ValidationError(
                f"control must be (n={n}, f, J, 3), got {self.control.shape}"
            )
        if self.frames == 0:
            self.frames = self.control.shape[1]
        if self.control.shape[1] != self.frames or self.control.shape[3] != 3:
            raise ValidationError(
                f"control must be (n, {self.frames}, J, 3), got {self.control.shape}"
            )
        if self.mask.shape != self.control.shape[:3]:
            raise ValidationError(
                f"mask must be {self.control.shape[:3]}, got {self.mask.shape}"
            )
        if not np.all((self.mask == 0.0) | (self.mask == 1.0)):
            raise ValidationError("mask entries must be exactly 0 or 1")
        if not np.all(np.isfinite(self.control[self.mask.astype(bool)])):
            raise ValidationError("masked control entries must be finite")
        seen: set[int] = set()
        for grp in self.groups:
            for m in grp.members:
                if m in seen:
                    raise ValidationError(f"agent {m} appears in more than one group")
                seen.add(m)
        if seen != set(range(n)):
            raise ValidationError(
                f"groups must partition agents 0..{n - 1}; covered {sorted(seen)}"
            )

    @property
    def J(self) -> int:
        return self.control.shape[2]

    def agent_group(self, agent: int) -> Group:
        for grp in self.groups:
            if agent in grp.members:
                return grp
        raise ValidationError(f"agent {agent} not in any group")

    def to_dict(self) -> dict:
        """Plan document with deterministic key order and sparse control."""
        idx = np.argwhere(self.mask == 1.0)
        entries = []
        for a, t, j in idx:
            x, y, z = self.control[a, t, j]
            entries.append([int(a), int(t), int(j), float(x), float(y), float(z)])
        entries.sort(key=lambda r: (r[0], r[1], r[2]))
        return {
            "version": PLAN_VERSION,
            "params": self.params.to_dict(),
            "fps": float(self.fps),
            "frames": int(self.frames),
            "provenance": dict(self.provenance),
            "groups": [g.to_dict() for g in self.groups],
            "control": {"joints": int(self.J), "entries": entries},
        }

    @staticmethod
    def from_dict(doc: dict) -> "ScenePlan":
        params = CrowdParams.from_dict(doc["params"])
        frames = int(doc["frames"])
        J = int(doc["control"]["joints"])
        control = np.zeros((params.n, frames, J, 3))
        mask = np.zeros((params.n, frames, J))
        for a, t, j, x, y, z in doc["control"]["entries"]:
            control[int(a), int(t), int(j)] = (x, y, z)
            mask[int(a), int(t), int(j)] = 1.0
        return ScenePlan(
            params=params,
            groups=[Group.from_dict(g) for g in doc["groups"]],
            control=control,
            mask=mask,
            fps=float(doc["fps"]),
            frames=frames,
            provenance=dict(doc.get("provenance", {})),
        )
