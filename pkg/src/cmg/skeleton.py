"""Skeleton topology: joint names, parents, rest offsets, foot joints.

The default skeleton is a 22-joint humanoid (pelvis root, y-up, forward +z,
left +x).  Alternative skeletons load from a JSON document of the form::

    {
      "up_axis": "y",
      "joints": [{"name": "pelvis", "parent": -1, "offset": [0.0, 0.0, 0.0]}, ...],
      "feet": {"left": [7, 10], "right": [8, 11]},
      "orientation": {"left_hip": 1, "right_hip": 2,
                      "left_shoulder": 16, "right_shoulder": 17}
    }

``feet`` lists ankle and toe indices per side (four joints total; duplicates
are allowed for minimal test skeletons).  ``orientation`` is optional; when
absent, heading extraction falls back to a fixed zero heading.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError

GROUND_CLEARANCE = 0.001  # rest pose floats this far above the ground plane


@dataclass(frozen=True)
class Skeleton:
    names: tuple[str, ...]
    parents: tuple[int, ...]
    offsets: np.ndarray  # (J, 3) rest offsets from parent, meters
    foot_left: tuple[int, int]  # ankle, toe
    foot_right: tuple[int, int]
    orientation: tuple[int, int, int, int] | None = None  # lhip, rhip, lsho, rsho
    up_axis: str = "y"

    def __post_init__(self):
        J = len(self.names)
        if J < 2:
            raise ValidationError("skeleton needs at least 2 joints")
        if len(self.parents) != J:
            raise ValidationError("parents length must match joint count")
        if self.parents[0] != -1:
            raise ValidationError("joint 0 must be the root (parent -1)")
        for i, p in enumerate(self.parents[1:], start=1):
            if not (0 <= p < i):
                raise ValidationError(f"joint {i} parent {p} must precede it")
        if self.offsets.shape != (J, 3):
            raise ValidationError(f"offsets must have shape ({J}, 3)")
        if not np.all(np.isfinite(self.offsets)):
            raise ValidationError("offsets contain non-finite values")
        if self.up_axis != "y":
            raise ValidationError("only the y up-axis is supported")
        for idx in self.foot_joints:
            if not (0 <= idx < J):
                raise ValidationError(f"foot joint index {idx} out of range")
        if self.orientation is not None:
            for idx in self.orientation:
                if not (0 <= idx < J):
                    raise ValidationError(f"orientation joint {idx} out of range")

    @property
    def J(self) -> int:
        return len(self.names)

    @property
    def foot_joints(self) -> tuple[int, int, int, int]:
        """The four contact-label joints: left ankle, left toe, right ankle, right toe."""
        return (*self.foot_left, *self.foot_right)

    def rest_positions(self) -> np.ndarray:
        """Rest-pose joint positions relative to the pelvis, (J, 3)."""
        pos = np.zeros((self.J, 3))
        for j in range(1, self.J):
            pos[j] = pos[self.parents[j]] + self.offsets[j]
        return pos

    def rest_root_height(self) -> float:
        """Pelvis height that rests the lowest joint just above the ground."""
        return float(-self.rest_positions()[:, 1].min() + GROUND_CLEARANCE)

    def to_dict(self) -> dict:
        doc = {
            "up_axis": self.up_axis,
            "joints": [
                {"name": n, "parent": int(p), "offset": [float(v) for v in o]}
                for n, p, o in zip(self.names, self.parents, self.offsets)
            ],
            "feet": {"left": list(self.foot_left), "right": list(self.foot_right)},
        }
        if self.orientation is not None:
            lh, rh, ls, rs = self.orientation
            doc["orientation"] = {
                "left_hip": lh,
                "right_hip": rh,
                "left_shoulder": ls,
                "right_shoulder": rs,
            }
        return doc

    @staticmethod
    def from_dict(doc: dict) -> "Skeleton":
        try:
            joints = doc["joints"]
            names = tuple(j["name"] for j in joints)
            parents = tuple(int(j["parent"]) for j in joints)
            offsets = np.array([j["offset"] for j in joints], dtype=np.float64)
            feet = doc["feet"]
            foot_left = tuple(int(i) for i in feet["left"])
            foot_right = tuple(int(i) for i in feet["right"])
        except (KeyError, TypeError, IndexError) as exc:
            raise ValidationError(f"malformed skeleton document: {exc}") from exc
        if len(foot_left) != 2 or len(foot_right) != 2:
            raise ValidationError("feet must list [ankle, toe] per side")
        orientation = None
        if "orientation" in doc:
            o = doc["orientation"]
            try:
                orientation = (
                    int(o["left_hip"]),
                    int(o["right_hip"]),
                    int(o["left_shoulder"]),
                    int(o["right_shoulder"]),
                )
            except (KeyError, TypeError) as exc:
                raise ValidationError(f"malformed orientation block: {exc}") from exc
        return Skeleton(
            names=names,
            parents=parents,
            offsets=offsets,
            foot_left=foot_left,  # type: ignore[arg-type]
            foot_right=foot_right,  # type: ignore[arg-type]
            orientation=orientation,
            up_axis=doc.get("up_axis", "y"),
        )

    @staticmethod
    def from_json_file(path: str | Path) -> "Skeleton":
        with open(path, encoding="utf-8") as fh:
            return Skeleton.from_dict(json.load(fh))


_DEFAULT_JOINTS = [
    # name, parent, offset (x, y, z)
    ("pelvis", -1, (0.0, 0.0, 0.0)),
    ("left_hip", 0, (0.10, -0.06, 0.0)),
    ("right_hip", 0, (-0.10, -0.06, 0.0)),
    ("spine1", 0, (0.0, 0.11, 0.0)),
    ("left_knee", 1, (0.0, -0.40, 0.0)),
    ("right_knee", 2, (0.0, -0.40, 0.0)),
    ("spine2", 3, (0.0, 0.13, 0.0)),
    ("left_ankle", 4, (0.0, -0.42, 0.0)),
    ("right_ankle", 5, (0.0, -0.42, 0.0)),
    ("spine3", 6, (0.0, 0.12, 0.0)),
    ("left_foot", 7, (0.0, -0.045, 0.12)),
    ("right_foot", 8, (0.0, -0.045, 0.12)),
    ("neck", 9, (0.0, 0.14, 0.0)),
    ("left_collar", 9, (0.07, 0.10, 0.0)),
    ("right_collar", 9, (-0.07, 0.10, 0.0)),
    ("head", 12, (0.0, 0.12, 0.0)),
    ("left_shoulder", 13, (0.10, 0.02, 0.0)),
    ("right_shoulder", 14, (-0.10, 0.02, 0.0)),
    ("left_elbow", 16, (0.26, 0.0, 0.0)),
    ("right_elbow", 17, (-0.26, 0.0, 0.0)),
    ("left_wrist", 18, (0.25, 0.0, 0.0)),
    ("right_wrist", 19, (-0.25, 0.0, 0.0)),
]


def default_skeleton() -> Skeleton:
    """The 22-joint humanoid used throughout the toolkit."""
    return Skeleton(
        names=tuple(n for n, _, _ in _DEFAULT_JOINTS),
        parents=tuple(p for _, p, _ in _DEFAULT_JOINTS),
        offsets=np.array([o for _, _, o in _DEFAULT_JOINTS], dtype=np.float64),
        foot_left=(7, 10),
        foot_right=(8, 11),
        orientation=(1, 2, 16, 17),
    )
