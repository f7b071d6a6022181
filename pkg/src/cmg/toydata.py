"""Synthetic grounded training data for overfit experiments and tests.

Each toy sequence keeps the lower body at the skeleton's rest pose — feet
planted on the ground — while the arms swing with per-sequence frequency,
amplitude and phase.  This yields physically plausible motion whose
relative encoding round-trips exactly, whose foot-contact loss can reach
zero, and whose control targets (pelvis everywhere plus one wrist
keyframe) coincide with the true motion.
"""

from __future__ import annotations

import numpy as np

from .motion import GlobalMotion, global_to_relative
from .skeleton import Skeleton, default_skeleton
from .training import TrainingSample

TOY_TEXTS = (
    "a person stands and waves the left arm slowly",
    "a person stands and waves the right arm slowly",
    "a person raises both arms in a steady rhythm",
    "a person swings the left arm in wide arcs",
    "a person swings the right arm in wide arcs",
    "a person lifts both arms quickly and lowers them",
    "a person makes small gestures with the left hand",
    "a person makes small gestures with the right hand",
)

# per-sequence (left amplitude, right amplitude, frequency Hz)
_TOY_MOTIONS = (
    (0.6, 0.0, 0.40),
    (0.0, 0.6, 0.40),
    (0.5, 0.5, 0.30),
    (0.9, 0.0, 0.35),
    (0.0, 0.9, 0.35),
    (0.7, 0.7, 0.60),
    (0.25, 0.0, 0.50),
    (0.0, 0.25, 0.50),
)


def make_toy_skeleton() -> Skeleton:
    """A 4-joint stick figure for small unit tests (feet double as toes)."""
    return Skeleton(
        names=("root", "torso", "left_foot", "right_foot"),
        parents=(-1, 0, 0, 0),
        offsets=np.array(
            [[0.0, 0.0, 0.0], [0.0, 0.5, 0.0], [0.1, -0.9, 0.0], [-0.1, -0.9, 0.0]]
        ),
        foot_left=(2, 2),
        foot_right=(3, 3),
        orientation=None,
    )


def _rotate_about_z(points: np.ndarray, pivot: np.ndarray, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    rel = points - pivot
    out = rel.copy()
    out[..., 0] = c * rel[..., 0] - s * rel[..., 1]
    out[..., 1] = s * rel[..., 0] + c * rel[..., 1]
    return out + pivot


def make_toy_motion(
    skel: Skeleton,
    frames: int,
    amp_left: float,
    amp_right: float,
    freq_hz: float,
    fps: float = 20.0,
    phase: float = 0.0,
) -> GlobalMotion:
    """One standing sequence with sinusoidal lateral arm swings."""
    rest = skel.rest_positions() + np.array([0.0, skel.rest_root_height(), 0.0])
    pos = np.tile(rest, (frames, 1, 1))
    names = list(skel.names)

    def chain(shoulder: str, below: tuple[str, ...]) -> tuple[int, list[int]]:
        return names.index(shoulder), [names.index(b) for b in below]

    arms = []
    if "left_shoulder" in names:
        arms.append((chain("left_shoulder", ("left_elbow", "left_wrist")), amp_left, 1.0))
    if "right_shoulder" in names:
        arms.append((chain("right_shoulder", ("right_elbow", "right_wrist")), amp_right, -1.0))
    t = np.arange(frames) / fps
    swing = np.sin(2.0 * np.pi * freq_hz * t + phase)
    for (pivot_idx, moved), amp, sign in arms:
        if amp == 0.0:
            continue
        pivot = rest[pivot_idx]
        for fr in range(frames):
            angle = sign * amp * swing[fr]
            pos[fr, moved] = _rotate_about_z(rest[moved], pivot, angle)
    return GlobalMotion(positions=pos, fps=fps)


def make_toy_dataset(
    skel: Skeleton | None = None,
    n: int = 8,
    frames: int = 60,
    seed: int = 0,
    fps: float = 20.0,
) -> tuple[list[TrainingSample], list[GlobalMotion]]:
    """Build ``n`` toy sequences with aligned control targets.

    The control block marks the pelvis at every frame and one wrist at the
    middle frame, both set to the true global positions, so a model that
    reconstructs the data satisfies the control exactly.
    """
    skel = default_skeleton() if skel is None else skel
    rng = np.random.default_rng(seed)
    names = list(skel.names)
    wrists = [names.index(w) for w in ("left_wrist", "right_wrist") if w in names]
    samples: list[TrainingSample] = []
    globs: list[GlobalMotion] = []
    for i in range(n):
        amp_l, amp_r, freq = _TOY_MOTIONS[i % len(_TOY_MOTIONS)]
        phase = float(rng.uniform(0.0, 2.0 * np.pi))
        glob = make_toy_motion(skel, frames, amp_l, amp_r, freq, fps=fps, phase=phase)
        rel = global_to_relative(glob, skel)
        control = np.zeros((frames, skel.J, 3))
        mask = np.zeros((frames, skel.J))
        control[:, 0, :] = glob.positions[:, 0, :]
        mask[:, 0] = 1.0
        if wrists:
            wrist = wrists[i % len(wrists)]
            mid = frames // 2
            control[mid, wrist, :] = glob.positions[mid, wrist, :]
            mask[mid, wrist] = 1.0
        samples.append(
            TrainingSample(
                text=TOY_TEXTS[i % len(TOY_TEXTS)],
                rel=rel.data,
                control=control,
                mask=mask,
            )
        )
        globs.append(glob)
    return samples, globs
