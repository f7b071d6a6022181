"""Event-driven trajectory rewrites: the six crowd response patterns.

:func:`apply_event` rewrites pelvis trajectories from an event's onset
frame according to its response pattern, leaving unaffected agents — and
all frames before the onset — untouched.  Every rewritten path respects the
per-frame speed clamp; agents move toward pattern targets and stop when
they arrive, so with enough frames the pattern geometry (queue slots, ring
slots, clearance radius, return-to-path) is met exactly.

Patterns:

- ``Following``: the leader keeps its path; follower of rank k tracks the
  leader's position half a second per rank in the past, offset sideways by
  0.6 m for odd ranks (a staggered column).
- ``Avoiding``: agents whose path comes within ``radius`` of the obstacle's
  swept segment are pushed out to exactly ``radius``, smoothstep-blended
  over the event window, and stay clear afterwards.
- ``Queuing``: slots every ``spacing`` meters along ``direction`` from the
  epicenter; agents are assigned by sorted projection (crossing-free) and
  walk straight to their slots.
- ``Encircling``: ring slots at equal angles around the epicenter; agents
  take the nearest free slot greedily in index order.
- ``Passing``: the Avoiding displacement blended back out within the same
  window, returning each agent to its original path.
- ``Random``: each agent walks to a waypoint drawn uniformly from a 3 m
  disk around its onset position, seeded by (plan seed, agent, onset).
"""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from .types import DEFAULT_V_MAX, EventSpec, PATTERNS, ScenePlan

FOLLOW_DELAY_S = 0.5  # per-rank time lag behind the leader
FOLLOW_OFFSET_M = 0.6  # lateral stagger for odd ranks
RANDOM_DISK_M = 3.0  # waypoint disk radius


def _smoothstep(tau: np.ndarray) -> np.ndarray:
    t = np.clip(tau, 0.0, 1.0)
    return 3.0 * t**2 - 2.0 * t**3


def _segment_closest(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Closest point on segment a-b for each row of p (ground plane)."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.broadcast_to(a, p.shape).copy()
    u = np.clip(((p - a) @ ab) / denom, 0.0, 1.0)
    return a + u[:, None] * ab


def _chase(path_xz: np.ndarray, targets_xz: np.ndarray, onset: int,
           v_step: float) -> np.ndarray:
    """March from the onset position toward per-frame targets, speed-clamped."""
    out = path_xz.copy()
    for t in range(onset + 1, len(path_xz)):
        delta = targets_xz[t] - out[t - 1]
        dist = float(np.hypot(*delta))
        if dist > v_step:
            out[t] = out[t - 1] + delta * (v_step / dist)
        else:
            out[t] = targets_xz[t]
    return out


def _following(paths: np.ndarray, event: EventSpec, fps: float,
               v_step: float) -> np.ndarray:
    n, f, _ = paths.shape
    leader = int(event.leader_agent)
    if not 0 <= leader < n:
        raise ValidationError(f"leader_agent {leader} out of range for {n} agents")
    onset = event.onset_frame
    lead = paths[leader]
    out = paths.copy()
    rank = 0
    for agent in range(n):
        if agent == leader:
            continue
        rank += 1
        delay = int(round(FOLLOW_DELAY_S * fps)) * rank
        offset = FOLLOW_OFFSET_M * (rank % 2)
        targets = np.empty((f, 2))
        for t in range(f):
            ref = max(0, min(t - delay, f - 1))
            vel = lead[min(ref + 1, f - 1)] - lead[ref]
            if np.hypot(*vel) < 1e-12:
                vel = lead[min(ref + 1, f - 1)] - lead[max(ref - 1, 0)]
            if np.hypot(*vel) < 1e-12:
                vel = np.array([1.0, 0.0])
            unit = vel / np.hypot(*vel)
            perp = np.array([-unit[1], unit[0]])
            targets[t] = lead[ref] + perp * offset
        out[agent] = _chase(paths[agent], targets, onset, v_step)
    return out


def _displaced_targets(orig: np.ndarray, event: EventSpec, fps: float,
                       returning: bool) -> np.ndarray:
    """Per-frame blended targets pushing a path out of the swept segment."""
    f = len(orig)
    onset, dur = event.onset_frame, event.duration_frames
    a = event.epicenter
    b = a + event.direction * (dur / fps)
    r = float(event.radius)
    closest = _segment_closest(orig, a, b)
    offset = orig - closest
    dist = np.hypot(offset[:, 0], offset[:, 1])
    inside = dist < r
    unit = np.zeros_like(offset)
    nz = dist > 1e-12
    unit[nz] = offset[nz] / dist[nz, None]
    if np.any(~nz & inside):
        seg = b - a
        perp = (np.array([-seg[1], seg[0]]) / max(np.hypot(*seg), 1e-12)
                if np.hypot(*seg) > 0 else np.array([0.0, 1.0]))
        unit[~nz & inside] = perp
    full = closest + unit * r
    tau = (np.arange(f) - onset) / max(dur, 1)
    if returning:
        blend = np.where(tau <= 0.5, _smoothstep(2.0 * tau), _smoothstep(2.0 * (1.0 - tau)))
    else:
        blend = _smoothstep(tau)
    targets = orig.copy()
    targets[inside] = orig[inside] + blend[inside, None] * (full[inside] - orig[inside])
    return targets


def _avoid_or_pass(paths: np.ndarray, event: EventSpec, fps: float,
                   v_step: float, returning: bool) -> np.ndarray:
    out = paths.copy()
    onset = event.onset_frame
    for agent in range(len(paths)):
        targets = _displaced_targets(paths[agent], event, fps, returning)
        if np.allclose(targets, paths[agent], atol=1e-12):
            continue  # never inside the clearance radius
        steps = np.diff(targets, axis=0)
        if np.all(np.hypot(steps[:, 0], steps[:, 1]) <= v_step + 1e-12):
            out[agent, onset:] = targets[onset:]  # blend is feasible as-is
        else:
            out[agent] = _chase(paths[agent], targets, onset, v_step)
    return out


def _queuing(paths: np.ndarray, event: EventSpec, v_step: float) -> np.ndarray:
    n, f, _ = paths.shape
    onset = event.onset_frame
    d = event.direction / np.hypot(*event.direction)
    proj = (paths[:, onset, :] - event.epicenter) @ d
    order = np.argsort(proj, kind="stable")
    out = paths.copy()
    for slot, agent in enumerate(order):
        target = event.epicenter + slot * event.spacing * d
        targets = np.broadcast_to(target, (f, 2))
        out[agent] = _chase(paths[agent], targets, onset, v_step)
    return out


def _encircling(paths: np.ndarray, event: EventSpec, v_step: float) -> np.ndarray:
    n, f, _ = paths.shape
    onset = event.onset_frame
    m = n
    slot_angles = 2.0 * np.pi * np.arange(m) / m
    slots = event.epicenter + event.radius * np.stack(
        [np.cos(slot_angles), np.sin(slot_angles)], axis=1
    )
    taken = np.zeros(m, dtype=bool)
    out = paths.copy()
    for agent in range(n):
        rel = paths[agent, onset] - event.epicenter
        ang = float(np.arctan2(rel[1], rel[0]))
        gaps = np.abs(np.angle(np.exp(1j * (slot_angles - ang))))
        gaps[taken] = np.inf
        slot = int(np.argmin(gaps))  # argmin takes the lowest index on ties
        taken[slot] = True
        targets = np.broadcast_to(slots[slot], (f, 2))
        out[agent] = _chase(paths[agent], targets, onset, v_step)
    return out


def _random(paths: np.ndarray, event: EventSpec, seed: int,
            v_step: float) -> np.ndarray:
    n, f, _ = paths.shape
    onset = event.onset_frame
    out = paths.copy()
    for agent in range(n):
        rng = np.random.default_rng([seed, agent, onset])
        radius = RANDOM_DISK_M * np.sqrt(rng.random())
        theta = 2.0 * np.pi * rng.random()
        waypoint = paths[agent, onset] + radius * np.array(
            [np.cos(theta), np.sin(theta)]
        )
        targets = np.broadcast_to(waypoint, (f, 2))
        out[agent] = _chase(paths[agent], targets, onset, v_step)
    return out


# Documented keyword table for offline event interpretation.
EVENT_KEYWORDS: list[tuple[tuple[str, ...], str]] = [
    (("follow", "leader", "march", "parade"), "Following"),
    (("avoid", "dodge", "obstacle", "car ", "vehicle", "bike"), "Avoiding"),
    (("queue", "line up", "lineup", "checkout", "ticket"), "Queuing"),
    (("encircle", "surround", "gather around", "circle around", "performer"),
     "Encircling"),
    (("pass", "through", "cross"), "Passing"),
]


def interpret_event(
    y_event: str,
    plan: ScenePlan,
    onset_frame: int | None = None,
    duration_frames: int | None = None,
) -> EventSpec:
    """Build an :class:`EventSpec` from free text via the keyword table.

    Unmatched text falls through to the ``Random`` pattern.  Geometric
    defaults: epicenter at the crowd centroid, direction +x, radius 1.5 m,
    onset at a quarter of the sequence, duration half of it.
    """
    f = plan.frames
    onset = f // 4 if onset_frame is None else int(onset_frame)
    duration = max(1, f // 2) if duration_frames is None else int(duration_frames)
    lowered = y_event.lower()
    pattern = "Random"
    for keywords, candidate in EVENT_KEYWORDS:
        if any(k in lowered for k in keywords):
            pattern = candidate
            break
    centroid = plan.control[:, min(onset, f - 1), 0, :][:, [0, 2]].mean(axis=0)
    return EventSpec(
        pattern=pattern,
        epicenter=centroid,
        onset_frame=onset,
        duration_frames=duration,
        direction=np.array([1.0, 0.0]),
        radius=1.5,
        leader_agent=0,
    )


def apply_event(
    plan: ScenePlan,
    y_event: str,
    event: EventSpec | None = None,
    backend: str = "fallback",
    v_max: float | None = None,
    llm_client=None,
) -> ScenePlan:
    """Rewrite the plan's trajectories in response to an event.

    With ``event=None`` the event is interpreted from ``y_event`` — via the
    LLM backend when configured, else the keyword table.  Returns a new
    plan; the input is not modified.
    """
    if event is None:
        if backend == "llm" and llm_client is not None:
            from .llm import interpret_event_llm

            event = interpret_event_llm(llm_client, y_event, plan)
        else:
            event = interpret_event(y_event, plan)
    if event.pattern not in PATTERNS:
        raise ValidationError(
            f"unknown pattern {event.pattern!r}; expected one of {PATTERNS}"
        )
    if event.onset_frame >= plan.frames:
        raise ValidationError(
            f"onset_frame {event.onset_frame} must be < frames {plan.frames}"
        )
    v_max = DEFAULT_V_MAX if v_max is None else float(v_max)
    v_step = v_max / plan.fps
    paths = plan.control[:, :, 0, :][:, :, [0, 2]].copy()  # (n, f, 2)
    seed = int(plan.provenance.get("seed", 0))

    if event.pattern == "Following":
        new_paths = _following(paths, event, plan.fps, v_step)
    elif event.pattern == "Avoiding":
        new_paths = _avoid_or_pass(paths, event, plan.fps, v_step, returning=False)
    elif event.pattern == "Queuing":
        new_paths = _queuing(paths, event, v_step)
    elif event.pattern == "Encircling":
        new_paths = _encircling(paths, event, v_step)
    elif event.pattern == "Passing":
        new_paths = _avoid_or_pass(paths, event, plan.fps, v_step, returning=True)
    else:
        new_paths = _random(paths, event, seed, v_step)

    control = plan.control.copy()
    mask = plan.mask.copy()
    onset = event.onset_frame
    for agent in range(plan.params.n):
        control[agent, :, 0, 0] = new_paths[agent, :, 0]
        control[agent, :, 0, 2] = new_paths[agent, :, 1]
        if np.max(np.abs(new_paths[agent] - paths[agent])) > 1e-12:
            # displaced agents abandon planned joint meetups from the onset on
            moved = mask[agent, onset:, 1:] == 1.0
            mask[agent, onset:, 1:][moved] = 0.0
            control[agent, onset:, 1:][moved] = 0.0

    provenance = dict(plan.provenance)
    events = list(provenance.get("events", []))
    events.append({"text": y_event, **event.to_dict()})
    provenance["events"] = events
    return ScenePlan(
        params=plan.params,
        groups=[g for g in plan.groups],
        control=control,
        mask=mask,
        fps=plan.fps,
        frames=plan.frames,
        provenance=provenance,
    )
