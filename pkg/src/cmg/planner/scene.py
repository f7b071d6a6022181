"""Scene planning: group division, activity assignment, control assembly.

:func:`plan_scene` turns a scene description plus crowd parameters into a
:class:`~cmg.planner.types.ScenePlan`.  The deterministic fallback backend
needs no network: it partitions agents, lays out group anchors on a grid
whose spacing shrinks with crowd density, assigns catalog activities, and
materializes pelvis trajectories (plus paired hand constraints for
interactive groups) into a dense control block.  The LLM backend asks for
candidate plans, scores them for feasibility, and falls back silently on
any client failure.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from ..errors import LLMError, ValidationError
from ..skeleton import Skeleton, default_skeleton
from .activities import CATALOG, pick_activity
from .trajectory import AgentTrack, trajectories_to_control
from .types import (
    DEFAULT_ARENA_BASE,
    DEFAULT_V_MAX,
    INTERACTION_ALPHA,
    CrowdParams,
    Group,
    ScenePlan,
)

log = logging.getLogger(__name__)

PLAN_CANDIDATES = 3  # candidate plans requested from the LLM backend

# Free-text activity names map onto catalog generators by keyword.
_ACTIVITY_KEYWORDS: list[tuple[tuple[str, ...], str]] = [
    (("handshake", "greet", "shake hands"), "handshake pair"),
    (("queue", "line up", "wait in line"), "queue"),
    (("dance", "ring"), "dance in circle"),
    (("exercise", "workout", "stretch", "yoga", "drill"), "exercise in rows"),
    (("converse", "talk", "chat", "stand"), "stand and converse"),
    (("walk", "stroll", "wander", "jog"), "walk"),
]


def divide_groups(
    params: CrowdParams, rng: np.random.Generator
) -> tuple[list[list[int]], list[bool]]:
    """Partition agents into g = max(1, ceil(n/s)) near-equal groups.

    Returns member lists plus a per-group flag marking which groups get
    close-interaction (paired hand) constraints; with interaction intensity
    alpha >= 0.7 at least one multi-member group is flagged.
    """
    n, s = params.n, params.s
    g = max(1, math.ceil(n / s))
    perm = [int(i) for i in rng.permutation(n)]
    base, rem = divmod(n, g)
    sizes = [base + 1] * rem + [base] * (g - rem)
    groups: list[list[int]] = []
    start = 0
    for size in sizes:
        groups.append(sorted(perm[start:start + size]))
        start += size
    interactive = [False] * g
    if params.alpha >= INTERACTION_ALPHA:
        for i, members in enumerate(groups):
            if len(members) >= 2:
                interactive[i] = True
                break
        else:
            interactive[0] = True
    return groups, interactive


def anchor_layout(g: int, sigma: float, arena_base: float = DEFAULT_ARENA_BASE) -> np.ndarray:
    """Ground-plane anchors on a centered grid, spacing = base * (1.5 - sigma)."""
    spacing = arena_base * (1.5 - sigma)
    cols = max(1, math.ceil(math.sqrt(g)))
    rows = math.ceil(g / cols)
    anchors = np.empty((g, 2))
    for k in range(g):
        row, col = divmod(k, cols)
        anchors[k] = (
            (col - (cols - 1) / 2.0) * spacing,
            (row - (rows - 1) / 2.0) * spacing,
        )
    return anchors


def match_generator(activity_text: str) -> str:
    """Map free-form activity text onto the nearest catalog entry."""
    lowered = activity_text.lower().strip()
    if lowered in CATALOG:
        return lowered
    for keywords, name in _ACTIVITY_KEYWORDS:
        if any(k in lowered for k in keywords):
            return name
    return "walk"


def _score_candidate(candidate, n: int, g_expected: int) -> float:
    """Feasibility score for an LLM plan candidate; invalid partitions score -inf."""
    seen: set[int] = set()
    for grp in candidate.groups:
        for m in grp.members:
            if m in seen or not 0 <= m < n:
                return float("-inf")
            seen.add(m)
    if seen != set(range(n)) or not candidate.groups:
        return float("-inf")
    score = 10.0
    if len(candidate.groups) == g_expected:
        score += 1.0
    for grp in candidate.groups:
        if grp.activity.lower().strip() in CATALOG:
            score += 1.0
        if grp.formation in ("cluster", "circle", "line", "pair"):
            score += 0.5
    return score


def _build_groups_fallback(
    y_scene: str,
    params: CrowdParams,
    rng: np.random.Generator,
) -> list[tuple[list[int], str, bool]]:
    members_per_group, interactive = divide_groups(params, rng)
    out = []
    for members, flag in zip(members_per_group, interactive):
        flag = flag and len(members) >= 2
        out.append((members, pick_activity(y_scene, rng, flag), flag))
    return out


def plan_scene(
    y_scene: str,
    params: CrowdParams,
    backend: str = "fallback",
    *,
    seed: int = 0,
    frames: int = 120,
    fps: float = 20.0,
    skel: Skeleton | None = None,
    interp: str = "catmull_rom",
    v_max: float = DEFAULT_V_MAX,
    arena_base: float = DEFAULT_ARENA_BASE,
    llm_client=None,
    candidates: int = PLAN_CANDIDATES,
) -> ScenePlan:
    """Build a complete scene plan.

    ``backend`` is ``"fallback"`` (deterministic, offline) or ``"llm"``.
    The LLM path never hard-fails: any client error falls back to the
    deterministic planner and records the reason in provenance.
    """
    if backend not in ("fallback", "llm"):
        raise ValidationError(f"backend must be 'fallback' or 'llm', got {backend!r}")
    if frames < 2:
        raise ValidationError("frames must be >= 2")
    skel = default_skeleton() if skel is None else skel
    rng = np.random.default_rng(seed)
    provenance: dict = {"backend": "fallback", "seed": int(seed)}

    group_specs: list[tuple[list[int], str, bool]] | None = None
    if backend == "llm":
        client = llm_client
        if client is None:
            from .llm import PlannerLLMClient

            client = PlannerLLMClient.from_env()
        if client is None:
            provenance["fallback_reason"] = "no LLM endpoint configured"
        else:
            try:
                from .llm import plan_candidates_llm

                cands, result = plan_candidates_llm(
                    client, y_scene, params.n, params.s, params.sigma, params.alpha,
                    tuple(CATALOG), k=candidates,
                )
                g_expected = max(1, math.ceil(params.n / params.s))
                scores = [_score_candidate(c, params.n, g_expected) for c in cands]
                best = int(np.argmax(scores))
                if scores[best] == float("-inf"):
                    provenance["fallback_reason"] = "no feasible LLM candidate"
                else:
                    group_specs = []
                    for grp in cands[best].groups:
                        members = sorted(int(m) for m in grp.members)
                        name = match_generator(grp.activity)
                        group_specs.append(
                            (members, grp.activity, name == "handshake pair")
                        )
                    provenance = {
                        "backend": "llm",
                        "seed": int(seed),
                        "candidates": len(cands),
                        "chosen": best,
                        "score": float(scores[best]),
                        "retries": result.retries,
                    }
            except LLMError as exc:
                log.warning("LLM planning failed (%s); using fallback", type(exc).__name__)
                provenance["fallback_reason"] = f"{type(exc).__name__}: {exc}"

    if group_specs is None:
        group_specs = _build_groups_fallback(y_scene, params, rng)

    anchors = anchor_layout(len(group_specs), params.sigma, arena_base)
    groups: list[Group] = []
    tracks: dict[int, AgentTrack] = {}
    for gid, (members, activity_text, interactive) in enumerate(group_specs):
        generator_name = match_generator(activity_text)
        if interactive and len(members) >= 2:
            generator_name = "handshake pair"
        gen = CATALOG[generator_name]
        g_tracks, constraints, formation = gen(
            members, anchors[gid], frames, fps, rng, skel, v_max
        )
        for track in g_tracks:
            tracks[track.agent] = track
        groups.append(
            Group(
                id=gid,
                members=list(members),
                activity_text=activity_text,
                anchor=anchors[gid],
                formation=formation,
                interaction_joints=constraints,
            )
        )

    ordered = [tracks[a] for a in sorted(tracks)]
    if len(ordered) != params.n:
        raise ValidationError(
            f"generators produced {len(ordered)} tracks for {params.n} agents"
        )
    control, mask = trajectories_to_control(
        ordered, frames, skel.J, interp=interp, v_max=v_max, fps=fps
    )
    return ScenePlan(
        params=params,
        groups=groups,
        control=control,
        mask=mask,
        fps=fps,
        frames=frames,
        provenance=provenance,
    )
