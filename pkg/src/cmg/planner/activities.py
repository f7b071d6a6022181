"""Deterministic activity catalog for offline scene planning.

Each catalog entry maps an activity text to a generator that lays out a
group's agents around its anchor and emits pelvis keyframes (plus, for the
interactive entry, paired hand-joint constraints).  Generators draw any
randomness from the provided generator instance, so a fixed seed yields a
fixed plan.
"""

from __future__ import annotations

import math
from collections.abc import Callable

import numpy as np

from ..skeleton import Skeleton
from .trajectory import AgentTrack
from .types import DEFAULT_HAND_DISTANCE, DEFAULT_V_MAX, Group

GeneratorResult = tuple[list[AgentTrack], list[tuple[int, int, int, int, float]], str]
Generator = Callable[..., GeneratorResult]

WALK_SPEED = 1.0  # m/s, comfortable walking pace below the clamp
HAND_JOINTS = ("left_wrist", "right_wrist")


def _ground(x: float, y: float, z: float) -> np.ndarray:
    return np.array([x, y, z], dtype=np.float64)


def _ring(members: list[int], anchor: np.ndarray, radius: float, h: float,
          phase: float = 0.0) -> list[np.ndarray]:
    m = len(members)
    out = []
    for k in range(m):
        a = phase + 2.0 * math.pi * k / m
        out.append(_ground(anchor[0] + radius * math.cos(a), h,
                           anchor[1] + radius * math.sin(a)))
    return out


def _unit(rng: np.random.Generator) -> np.ndarray:
    a = rng.uniform(0.0, 2.0 * math.pi)
    return np.array([math.cos(a), math.sin(a)])


def gen_walk(members, anchor, frames, fps, rng, skel: Skeleton,
             v_max=DEFAULT_V_MAX) -> GeneratorResult:
    """Group strolls together along a shared heading."""
    h = skel.rest_root_height()
    d = _unit(rng)
    dist = min(WALK_SPEED, 0.9 * v_max) * (frames - 1) / fps * 0.8
    starts = _ring(members, anchor, max(0.7, 0.3 * len(members)), h,
                   phase=rng.uniform(0.0, 2.0 * math.pi))
    tracks = []
    for agent, start in zip(members, starts):
        end = start + np.array([d[0], 0.0, d[1]]) * dist
        mid = (start + end) / 2.0
        tracks.append(AgentTrack(agent)
                      .add(0, start).add((frames - 1) // 2, mid).add(frames - 1, end))
    return tracks, [], "cluster"


def gen_converse(members, anchor, frames, fps, rng, skel: Skeleton,
                 v_max=DEFAULT_V_MAX) -> GeneratorResult:
    """Group stands on a small circle facing inward."""
    h = skel.rest_root_height()
    radius = max(0.45, 0.7 * len(members) / (2.0 * math.pi))
    spots = _ring(members, anchor, radius, h, phase=rng.uniform(0.0, 2.0 * math.pi))
    tracks = [AgentTrack(agent).add(0, s).add(frames - 1, s)
              for agent, s in zip(members, spots)]
    return tracks, [], "circle"


def gen_queue(members, anchor, frames, fps, rng, skel: Skeleton,
              v_max=DEFAULT_V_MAX) -> GeneratorResult:
    """Group waits in a line behind the anchor."""
    h = skel.rest_root_height()
    d = _unit(rng)
    tracks = []
    for k, agent in enumerate(members):
        pos = _ground(anchor[0] + 0.8 * k * d[0], h, anchor[1] + 0.8 * k * d[1])
        tracks.append(AgentTrack(agent).add(0, pos).add(frames - 1, pos))
    return tracks, [], "line"


def gen_dance(members, anchor, frames, fps, rng, skel: Skeleton,
              v_max=DEFAULT_V_MAX) -> GeneratorResult:
    """Group circles its anchor at a steady angular speed."""
    h = skel.rest_root_height()
    radius = max(0.8, 0.22 * len(members))
    omega = min(1.2, 0.85 * v_max / radius)  # rad/s on the ring
    phase = rng.uniform(0.0, 2.0 * math.pi)
    step = max(1, int(round(fps / 2)))  # keyframe every half second
    tracks = []
    for k, agent in enumerate(members):
        a0 = phase + 2.0 * math.pi * k / len(members)
        track = AgentTrack(agent)
        for fr in range(0, frames, step):
            a = a0 + omega * fr / fps
            track.add(fr, _ground(anchor[0] + radius * math.cos(a), h,
                                  anchor[1] + radius * math.sin(a)))
        if (frames - 1) % step != 0:
            a = a0 + omega * (frames - 1) / fps
            track.add(frames - 1, _ground(anchor[0] + radius * math.cos(a), h,
                                          anchor[1] + radius * math.sin(a)))
        tracks.append(track)
    return tracks, [], "circle"


def gen_exercise(members, anchor, frames, fps, rng, skel: Skeleton,
                 v_max=DEFAULT_V_MAX) -> GeneratorResult:
    """Group holds a workout grid of rows."""
    h = skel.rest_root_height()
    cols = max(1, math.ceil(math.sqrt(len(members))))
    spacing = 1.2
    d = _unit(rng)
    perp = np.array([-d[1], d[0]])
    tracks = []
    for k, agent in enumerate(members):
        row, col = divmod(k, cols)
        offs = (col - (cols - 1) / 2.0) * spacing * d + row * spacing * perp
        pos = _ground(anchor[0] + offs[0], h, anchor[1] + offs[1])
        tracks.append(AgentTrack(agent).add(0, pos).add(frames - 1, pos))
    return tracks, [], "line"


def gen_handshake(members, anchor, frames, fps, rng, skel: Skeleton,
                  v_max=DEFAULT_V_MAX) -> GeneratorResult:
    """Pairs approach each other and shake hands at a fixed distance."""
    h = skel.rest_root_height()
    d = _unit(rng)
    perp = np.array([-d[1], d[0]])
    try:
        wrist = skel.names.index("right_wrist")
    except ValueError:
        wrist = skel.J - 1
    meet = max(1, frames // 2)
    approach = min(1.5, 0.8 * v_max * meet / fps)
    tracks: list[AgentTrack] = []
    constraints: list[tuple[int, int, int, int, float]] = []
    pairs = [members[i:i + 2] for i in range(0, len(members) - 1, 2)]
    leftover = members[-1] if len(members) % 2 else None
    for k, (a, b) in enumerate(pairs):
        center = anchor + (k - (len(pairs) - 1) / 2.0) * 1.6 * perp
        stand = 0.35  # half body separation when shaking hands
        pa0 = _ground(center[0] - d[0] * (stand + approach), h,
                      center[1] - d[1] * (stand + approach))
        pb0 = _ground(center[0] + d[0] * (stand + approach), h,
                      center[1] + d[1] * (stand + approach))
        pa1 = _ground(center[0] - d[0] * stand, h, center[1] - d[1] * stand)
        pb1 = _ground(center[0] + d[0] * stand, h, center[1] + d[1] * stand)
        ta = AgentTrack(a).add(0, pa0).add(meet, pa1).add(frames - 1, pa1)
        tb = AgentTrack(b).add(0, pb0).add(meet, pb1).add(frames - 1, pb1)
        half = DEFAULT_HAND_DISTANCE / 2.0
        hand_a = _ground(center[0] - d[0] * half, 1.0, center[1] - d[1] * half)
        hand_b = _ground(center[0] + d[0] * half, 1.0, center[1] + d[1] * half)
        for fr in (meet, min(frames - 1, meet + 5)):
            ta.add_joint(fr, wrist, hand_a)
            tb.add_joint(fr, wrist, hand_b)
        constraints.append((a, wrist, b, wrist, DEFAULT_HAND_DISTANCE))
        tracks.extend([ta, tb])
    if leftover is not None:
        pos = _ground(anchor[0] + 1.2 * d[0] + 2.0 * perp[0] * len(pairs), h,
                      anchor[1] + 1.2 * d[1] + 2.0 * perp[1] * len(pairs))
        tracks.append(AgentTrack(leftover).add(0, pos).add(frames - 1, pos))
    return tracks, constraints, "pair"


CATALOG: dict[str, Generator] = {
    "walk": gen_walk,
    "stand and converse": gen_converse,
    "queue": gen_queue,
    "dance in circle": gen_dance,
    "exercise in rows": gen_exercise,
    "handshake pair": gen_handshake,
}

# Scene keywords that nudge the deterministic activity choice.
SCENE_HINTS: dict[str, str] = {
    "gym": "exercise in rows",
    "park": "walk",
    "street": "walk",
    "square": "walk",
    "plaza": "stand and converse",
    "market": "queue",
    "station": "queue",
    "festival": "dance in circle",
    "party": "dance in circle",
    "meeting": "handshake pair",
}


def pick_activity(y_scene: str, rng: np.random.Generator, interactive: bool) -> str:
    """Choose a catalog activity for one group.

    Interactive groups always get the paired-hands activity; otherwise a
    scene keyword picks a preferred entry and the generator stream breaks
    ties among the rest.
    """
    if interactive:
        return "handshake pair"
    names = [n for n in CATALOG if n != "handshake pair"]
    choice = names[int(rng.integers(len(names)))]
    lowered = y_scene.lower()
    for keyword, preferred in SCENE_HINTS.items():
        if keyword in lowered and preferred in names:
            return preferred
    return choice
