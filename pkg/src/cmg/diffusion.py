"""DDPM-style diffusion primitives on float64 arrays.

Schedule construction, forward noising, the x0 <-> epsilon conversion, one
reverse transition, classifier-free guidance combination, and respacing of a
schedule onto a strided subset of timesteps.

Conventions: timestep ``t`` indexes arrays in ``[0, T)``; the forward process
is ``x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps`` with
``alpha_bar_t`` the running product of ``alpha_s = 1 - beta_s``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

DEFAULT_T = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02

# Reverse-transition mean conventions, see reverse_step().
MEAN_MODES = ("direct", "posterior")


@dataclass(frozen=True)
class DiffusionSchedule:
    """Noise schedule: betas, alphas = 1 - betas, alpha_bars = cumprod."""

    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def T(self) -> int:
        return int(self.betas.shape[0])

    def __post_init__(self):
        for name in ("betas", "alphas", "alpha_bars"):
            arr = getattr(self, name)
            if arr.ndim != 1 or arr.dtype != np.float64:
                raise ValidationError(f"{name} must be a 1-D float64 array")
        if not (self.betas.shape == self.alphas.shape == self.alpha_bars.shape):
            raise ValidationError("schedule arrays must share a common length")


def build_schedule(
    T: int = DEFAULT_T,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> DiffusionSchedule:
    """Linear beta schedule from ``beta_start`` to ``beta_end`` over T steps."""
    if T < 1:
        raise ValidationError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start < 1.0) or not (0.0 < beta_end < 1.0):
        raise ValidationError("beta bounds must lie strictly inside (0, 1)")
    if beta_end < beta_start:
        raise ValidationError("beta_end must be >= beta_start")
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    return DiffusionSchedule(betas=betas, alphas=alphas, alpha_bars=alpha_bars)


def _check_t(t: int, sched: DiffusionSchedule, minimum: int = 0) -> int:
    t = int(t)
    if t < minimum or t >= sched.T:
        raise ValidationError(f"timestep {t} outside [{minimum}, {sched.T})")
    return t


def forward_noise(
    x0: np.ndarray, t: int, sched: DiffusionSchedule, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Noise a clean sample to level t; returns (x_t, eps)."""
    t = _check_t(t, sched)
    x0 = np.asarray(x0, dtype=np.float64)
    if not np.all(np.isfinite(x0)):
        raise ValidationError("x0 contains non-finite values")
    eps = rng.standard_normal(x0.shape)
    ab = sched.alpha_bars[t]
    x_t = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps
    return x_t, eps


def epsilon_from_x0(
    x_t: np.ndarray, x0_hat: np.ndarray, t: int, sched: DiffusionSchedule
) -> np.ndarray:
    """Recover the noise consistent with the forward process.

    eps_hat = (x_t - sqrt(alpha_bar_t) * x0_hat) / sqrt(1 - alpha_bar_t),
    the exact inversion of forward_noise.
    """
    t = _check_t(t, sched)
    ab = sched.alpha_bars[t]
    x_t = np.asarray(x_t, dtype=np.float64)
    x0_hat = np.asarray(x0_hat, dtype=np.float64)
    if x_t.shape != x0_hat.shape:
        raise ValidationError("x_t and x0_hat must share a shape")
    return (x_t - np.sqrt(ab) * x0_hat) / np.sqrt(1.0 - ab)


def reverse_mean(
    x_t: np.ndarray,
    x0_hat: np.ndarray,
    t: int,
    sched: DiffusionSchedule,
    mean_mode: str = "direct",
) -> np.ndarray:
    """Mean of the reverse transition p(x_{t-1} | x_t) under an x0 prediction.

    ``direct``:    mu = sqrt(ab_{t-1}) * x0_hat + sqrt(1 - ab_{t-1}) * eps_hat
    ``posterior``: the closed-form q(x_{t-1} | x_t, x0_hat) mean.
    """
    t = _check_t(t, sched, minimum=1)
    if mean_mode not in MEAN_MODES:
        raise ValidationError(f"mean_mode must be one of {MEAN_MODES}")
    x_t = np.asarray(x_t, dtype=np.float64)
    x0_hat = np.asarray(x0_hat, dtype=np.float64)
    ab_t = sched.alpha_bars[t]
    ab_prev = sched.alpha_bars[t - 1]
    if mean_mode == "direct":
        eps_hat = epsilon_from_x0(x_t, x0_hat, t, sched)
        return np.sqrt(ab_prev) * x0_hat + np.sqrt(1.0 - ab_prev) * eps_hat
    beta_t = sched.betas[t]
    alpha_t = sched.alphas[t]
    coef_x0 = np.sqrt(ab_prev) * beta_t / (1.0 - ab_t)
    coef_xt = np.sqrt(alpha_t) * (1.0 - ab_prev) / (1.0 - ab_t)
    return coef_x0 * x0_hat + coef_xt * x_t


def reverse_step(
    x_t: np.ndarray,
    x0_hat: np.ndarray,
    t: int,
    sched: DiffusionSchedule,
    rng: np.random.Generator | None,
    mean_mode: str = "direct",
) -> np.ndarray:
    """One reverse transition x_t -> x_{t-1}.

    Adds sqrt(beta_t) * z noise except at t == 1, the final transition,
    which returns the mean exactly.  ``rng=None`` also suppresses noise.
    """
    t = _check_t(t, sched, minimum=1)
    mu = reverse_mean(x_t, x0_hat, t, sched, mean_mode=mean_mode)
    if t == 1 or rng is None:
        return mu
    z = rng.standard_normal(mu.shape)
    return mu + np.sqrt(sched.betas[t]) * z


def cfg_combine(cond: np.ndarray, uncond: np.ndarray, scale: float) -> np.ndarray:
    """Classifier-free guidance: uncond + scale * (cond - uncond)."""
    cond = np.asarray(cond, dtype=np.float64)
    uncond = np.asarray(uncond, dtype=np.float64)
    if cond.shape != uncond.shape:
        raise ValidationError("cond and uncond must share a shape")
    return uncond + float(scale) * (cond - uncond)


def strided_timesteps(T: int, steps: int) -> np.ndarray:
    """Evenly spaced timesteps over [0, T), ascending, endpoints included.

    ``steps == 1`` yields [T-1] so a single-step run starts from pure noise.
    """
    if steps < 1 or steps > T:
        raise ValidationError(f"steps must lie in [1, {T}], got {steps}")
    if steps == 1:
        return np.array([T - 1], dtype=np.int64)
    ts = np.round(np.linspace(T - 1, 0, steps)).astype(np.int64)
    return ts[::-1].copy()


def respace_schedule(
    sched: DiffusionSchedule, steps: int
) -> tuple[DiffusionSchedule, np.ndarray]:
    """Restrict a schedule to ``steps`` evenly spaced timesteps.

    Returns the compressed schedule plus the map from compressed index to
    original timestep.  The compressed betas satisfy
    ``1 - beta_k = alpha_bar(t_k) / alpha_bar(t_{k-1})`` so the cumulative
    products line up with the original schedule at the kept timesteps.
    """
    ts = strided_timesteps(sched.T, steps)
    ab = sched.alpha_bars[ts]
    prev = np.concatenate([[1.0], ab[:-1]])
    betas = 1.0 - ab / prev
    return DiffusionSchedule(betas=betas, alphas=1.0 - betas, alpha_bars=ab), ts
