"""Full sampling pipeline: strided reverse diffusion with classifier-free
guidance over the text condition and optional IK guidance on the final
iterations.

The loop runs over a respaced schedule: at compressed index k (original
timestep ts[k]) the model predicts x0, conditional and unconditional
predictions are combined, the prediction is optionally guided toward the
spatial controls, and one reverse transition moves to index k-1.  At k = 0
the clean prediction itself is returned.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .denoiser import DenoiserWeights, denoise_forward
from .diffusion import DiffusionSchedule, cfg_combine, respace_schedule, reverse_step
from .errors import ValidationError
from .guidance import GuidanceConfig, ik_guide
from .textemb import TextCondition, null_text

DEFAULT_STEPS = 50
DEFAULT_CFG_SCALE = 2.5


def sample(
    weights: DenoiserWeights,
    text: TextCondition,
    control: np.ndarray | None = None,
    mask: np.ndarray | None = None,
    *,
    sched: DiffusionSchedule,
    steps: int = DEFAULT_STEPS,
    cfg_scale: float = DEFAULT_CFG_SCALE,
    guidance: GuidanceConfig | None = None,
    rng: np.random.Generator,
    mean_mode: str = "direct",
    float32: bool = False,
) -> np.ndarray:
    """Generate one relative-channel sequence, (frames, D).

    ``control``/``mask`` are (f, J, 3) and (f, J); ``None`` acts as an
    all-zero mask, and an all-zero mask reproduces the unconditioned run
    for the same rng state bit for bit.
    """
    cfg = weights.cfg
    if sched.T != cfg.T:
        raise ValidationError(f"schedule T {sched.T} != model T {cfg.T}")
    if control is None:
        control = np.zeros((cfg.frames, cfg.joints, 3))
    control = np.asarray(control, dtype=np.float64)
    if mask is None:
        mask = np.zeros((cfg.frames, cfg.joints))
    mask = np.asarray(mask, dtype=np.float64)
    if control.shape != (cfg.frames, cfg.joints, 3):
        raise ValidationError(
            f"control must be ({cfg.frames}, {cfg.joints}, 3), got {control.shape}"
        )
    if mask.shape != (cfg.frames, cfg.joints):
        raise ValidationError(f"mask must be ({cfg.frames}, {cfg.joints}), got {mask.shape}")
    if guidance is not None and guidance.last_n > steps:
        raise ValidationError("guidance.last_n cannot exceed the sampling step count")

    respaced, ts = respace_schedule(sched, steps)
    n_steps = len(ts)
    has_control = bool(mask.sum() > 0)
    uncond = null_text(cfg.text_dim)

    x = rng.standard_normal((cfg.frames, cfg.D))

    def predict(x_now: np.ndarray, t_orig: int) -> np.ndarray:
        if float32:
            with ad.dtype_context(np.float32):
                x32 = x_now.astype(np.float32)
                c = denoise_forward(x32, t_orig, text, control, mask, weights)
                u = denoise_forward(x32, t_orig, uncond, control, mask, weights)
        else:
            c = denoise_forward(x_now, t_orig, text, control, mask, weights)
            u = denoise_forward(x_now, t_orig, uncond, control, mask, weights)
        return cfg_combine(c, u, cfg_scale)

    for k in range(n_steps - 1, -1, -1):
        x0_hat = predict(x, int(ts[k]))
        if guidance is not None and has_control and k < guidance.last_n:
            x0_hat = ik_guide(x0_hat, control, mask, guidance).mu
        if k == 0:
            return x0_hat
        x = reverse_step(x, x0_hat, k, respaced, rng, mean_mode=mean_mode)
    return x  # pragma: no cover - loop always returns at k == 0
