"""Keyframed trajectories: densification, speed clamping, control assembly.

Planners produce sparse pelvis keyframes per agent plus optional joint
keyframes (e.g., a hand meeting point).  :func:`trajectories_to_control`
densifies the pelvis track to every frame — Catmull-Rom by default,
piecewise linear on request — clamps per-frame speed, and writes the
result into a dense (n, f, J, 3) control block with its mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError
from .types import DEFAULT_V_MAX

INTERP_MODES = ("catmull_rom", "linear")


@dataclass
class AgentTrack:
    """Keyframed plan for one agent.

    ``keyframes`` holds (frame, xyz) pelvis targets, strictly increasing in
    frame.  ``joint_keyframes`` holds (frame, joint, xyz) one-off constraints
    written only at their exact frames.
    """

    agent: int
    keyframes: list[tuple[int, np.ndarray]] = field(default_factory=list)
    joint_keyframes: list[tuple[int, int, np.ndarray]] = field(default_factory=list)

    def add(self, frame: int, pos) -> "AgentTrack":
        self.keyframes.append((int(frame), np.asarray(pos, dtype=np.float64).reshape(3)))
        return self

    def add_joint(self, frame: int, joint: int, pos) -> "AgentTrack":
        self.joint_keyframes.append(
            (int(frame), int(joint), np.asarray(pos, dtype=np.float64).reshape(3))
        )
        return self


def _check_keyframes(track: AgentTrack, frames: int) -> None:
    if not track.keyframes:
        raise ValidationError(f"agent {track.agent} has no pelvis keyframes")
    last = -1
    for fr, pos in track.keyframes:
        if fr <= last:
            raise ValidationError(
                f"agent {track.agent} keyframes out of order at frame {fr}"
            )
        if fr >= frames:
            raise ValidationError(
                f"agent {track.agent} keyframe {fr} beyond sequence length {frames}"
            )
        if not np.all(np.isfinite(pos)):
            raise ValidationError(f"agent {track.agent} keyframe {fr} is not finite")
        last = fr


def catmull_rom(points: np.ndarray, knots: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Uniform Catmull-Rom through ``points`` at integer ``knots``.

    Standard cubic Hermite segments with tangents m_i = (P_{i+1} − P_{i−1})/2
    and clamped ends (endpoint duplication), evaluated at ``queries`` using
    the normalized segment parameter u = (q − k_i)/(k_{i+1} − k_i).  Queries
    outside the knot span hold the nearest endpoint.
    """
    points = np.asarray(points, dtype=np.float64)
    knots = np.asarray(knots, dtype=np.float64)
    m = len(points)
    if m == 1:
        return np.repeat(points, len(queries), axis=0)
    padded = np.concatenate([points[:1], points, points[-1:]], axis=0)
    tangents = (padded[2:] - padded[:-2]) / 2.0  # (m, dim)
    out = np.empty((len(queries),) + points.shape[1:], dtype=np.float64)
    seg = np.clip(np.searchsorted(knots, queries, side="right") - 1, 0, m - 2)
    for idx, q in enumerate(queries):
        i = seg[idx]
        k0, k1 = knots[i], knots[i + 1]
        u = np.clip((q - k0) / (k1 - k0), 0.0, 1.0)
        h00 = 2 * u**3 - 3 * u**2 + 1
        h10 = u**3 - 2 * u**2 + u
        h01 = -2 * u**3 + 3 * u**2
        h11 = u**3 - u**2
        out[idx] = (
            h00 * points[i]
            + h10 * tangents[i]
            + h01 * points[i + 1]
            + h11 * tangents[i + 1]
        )
    return out


def densify(track: AgentTrack, frames: int, interp: str = "catmull_rom") -> np.ndarray:
    """Expand pelvis keyframes to a dense (frames, 3) path."""
    if interp not in INTERP_MODES:
        raise ValidationError(f"interp must be one of {INTERP_MODES}, got {interp!r}")
    _check_keyframes(track, frames)
    knots = np.array([fr for fr, _ in track.keyframes], dtype=np.float64)
    pts = np.stack([pos for _, pos in track.keyframes])
    queries = np.arange(frames, dtype=np.float64)
    if len(pts) == 1:
        return np.repeat(pts, frames, axis=0)
    if interp == "linear":
        out = np.empty((frames, 3))
        for d in range(3):
            out[:, d] = np.interp(queries, knots, pts[:, d])
        return out
    return catmull_rom(pts, knots, queries)


def clamp_speed(path: np.ndarray, v_step: float) -> np.ndarray:
    """Limit per-frame ground-plane displacement to ``v_step`` meters.

    Chases the input path: each frame moves from the previous output
    position toward the input position, truncating the step when it exceeds
    the limit.  Feasible paths pass through unchanged.
    """
    path = np.asarray(path, dtype=np.float64)
    out = path.copy()
    for t in range(1, len(path)):
        delta = path[t, [0, 2]] - out[t - 1, [0, 2]]
        dist = float(np.hypot(*delta))
        if dist > v_step:
            out[t, [0, 2]] = out[t - 1, [0, 2]] + delta * (v_step / dist)
        else:
            out[t, [0, 2]] = path[t, [0, 2]]
    return out


def trajectories_to_control(
    tracks: list[AgentTrack],
    frames: int,
    joints: int,
    interp: str = "catmull_rom",
    v_max: float = DEFAULT_V_MAX,
    fps: float = 20.0,
    root_joint: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Materialize keyframed tracks into (control, mask) arrays.

    The pelvis path is densified to every frame and speed-clamped; joint
    keyframes are written only at their own frames.  The mask is 1 exactly
    where a coordinate was written.
    """
    n = len(tracks)
    control = np.zeros((n, frames, joints, 3))
    mask = np.zeros((n, frames, joints))
    v_step = v_max / fps
    for i, track in enumerate(tracks):
        path = clamp_speed(densify(track, frames, interp), v_step)
        control[i, :, root_joint, :] = path
        mask[i, :, root_joint] = 1.0
        for fr, joint, pos in track.joint_keyframes:
            if not 0 <= fr < frames:
                raise ValidationError(
                    f"agent {track.agent} joint keyframe {fr} out of range"
                )
            if not 0 <= joint < joints:
                raise ValidationError(
                    f"agent {track.agent} joint index {joint} out of range"
                )
            control[i, fr, joint, :] = pos
            mask[i, fr, joint] = 1.0
    return control, mask
