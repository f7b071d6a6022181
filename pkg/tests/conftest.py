"""Shared fixtures and numerical helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from cmg.motion import GlobalMotion
from cmg.skeleton import Skeleton, default_skeleton
from cmg.toydata import make_toy_skeleton


@pytest.fixture(scope="session")
def skel22() -> Skeleton:
    return default_skeleton()


@pytest.fixture(scope="session")
def skel4() -> Skeleton:
    return make_toy_skeleton()


def rng(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed)


def smooth_global_motion(
    skel: Skeleton,
    frames: int = 30,
    seed: int = 0,
    fps: float = 20.0,
    scale: float = 0.3,
) -> GlobalMotion:
    """A smooth, skeleton-shaped test motion: rest pose plus low-frequency sway.

    Built directly from the rest offsets so it stays physically plausible
    (bones keep roughly their rest lengths) without using any converter
    under test.
    """
    r = np.random.default_rng(seed)
    J = skel.J
    rest = np.zeros((J, 3))
    for j in range(1, J):
        rest[j] = rest[skel.parents[j]] + skel.offsets[j]
    rest[:, 1] -= rest[:, 1].min()

    t = np.arange(frames)[:, None, None] / fps
    freqs = r.uniform(0.2, 1.0, size=(1, J, 3))
    phases = r.uniform(0, 2 * np.pi, size=(1, J, 3))
    amps = r.uniform(0.0, scale, size=(1, J, 3))
    sway = amps * np.sin(2 * np.pi * freqs * t + phases)

    root_path = np.zeros((frames, 1, 3))
    root_path[:, 0, 0] = np.linspace(0, r.uniform(0.5, 2.0), frames)
    root_path[:, 0, 2] = np.linspace(0, r.uniform(-1.0, 1.0), frames)

    pos = rest[None] + sway + root_path
    pos[..., 1] = np.maximum(pos[..., 1], 0.0)
    return GlobalMotion(positions=pos, fps=fps)


def finite_difference(fn, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function of an array."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = fn(x)
        flat[i] = orig - eps
        lo = fn(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * eps)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), 1e-12)
    return float(np.linalg.norm(a - b)) / denom
