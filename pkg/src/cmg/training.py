"""Full-gradient training loop for the denoiser at toy scale.

Each step draws one timestep per sample, noises the clean sequences with
the forward process, predicts x0, and descends the combined loss.  All
derivatives come off the autodiff tape; the test suite validates them
against central finite differences.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .denoiser import DenoiserWeights, denoise_forward_tensor
from .diffusion import DiffusionSchedule
from .errors import TrainingDivergedError, ValidationError
from .losses import LossWeights, loss_total
from .skeleton import Skeleton
from .textemb import HashedBagOfWords, TextCondition, embed_text, null_text

log = logging.getLogger(__name__)

OPTIMIZERS = ("adam", "sgd")


@dataclass
class TrainingSample:
    text: str
    rel: np.ndarray  # (f, D) clean relative channels
    control: np.ndarray  # (f, J, 3) world-frame targets (canonical frame)
    mask: np.ndarray  # (f, J) binary


@dataclass
class TrainConfig:
    steps: int = 2000
    lr: float = 2e-4
    optimizer: str = "adam"
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int | None = None  # None = full dataset every step
    p_uncond: float = 0.1
    seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValidationError(f"optimizer must be one of {OPTIMIZERS}")
        if self.steps < 1 or self.lr < 0:
            raise ValidationError("steps must be >= 1 and lr >= 0")


@dataclass
class Optimizer:
    cfg: TrainConfig
    state: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)
    step_count: int = 0

    def apply(self, params: dict[str, ad.Tensor]) -> None:
        self.step_count += 1
        for name, p in params.items():
            g = p.grad
            if g is None:
                continue
            st = self.state.setdefault(name, {})
            if self.cfg.optimizer == "sgd":
                buf = st.setdefault("momentum", np.zeros_like(p.value))
                buf *= self.cfg.momentum
                buf += g
                p.value -= self.cfg.lr * buf
            else:
                m = st.setdefault("m", np.zeros_like(p.value))
                v = st.setdefault("v", np.zeros_like(p.value))
                m *= self.cfg.beta1
                m += (1 - self.cfg.beta1) * g
                v *= self.cfg.beta2
                v += (1 - self.cfg.beta2) * g * g
                mhat = m / (1 - self.cfg.beta1**self.step_count)
                vhat = v / (1 - self.cfg.beta2**self.step_count)
                p.value -= self.cfg.lr * mhat / (np.sqrt(vhat) + self.cfg.adam_eps)


def training_loss(
    weights: DenoiserWeights,
    batch: list[TrainingSample],
    t: np.ndarray,
    eps: np.ndarray,
    texts: list[TextCondition],
    sched: DiffusionSchedule,
    skel: Skeleton,
    loss_weights: LossWeights,
) -> tuple[ad.Tensor, dict[str, float]]:
    """Deterministic loss for an explicit (batch, timestep, noise) draw.

    Pure in (weights, batch, t, eps, texts), which makes it directly usable
    for finite-difference gradient validation.
    """
    x0 = np.stack([s.rel for s in batch])
    control = np.stack([s.control for s in batch])
    mask = np.stack([s.mask for s in batch])
    ab = sched.alpha_bars[t][:, None, None]
    x_t = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps
    x0_hat = denoise_forward_tensor(ad.Tensor(x_t), t, texts, control, mask, weights)
    return loss_total(x0_hat, x0, control, mask, skel, loss_weights)


def train_toy(
    weights: DenoiserWeights,
    dataset: list[TrainingSample],
    sched: DiffusionSchedule,
    skel: Skeleton,
    loss_weights: LossWeights = LossWeights(),
    cfg: TrainConfig = TrainConfig(),
) -> dict[str, list[float]]:
    """Train in place; returns per-step loss part history."""
    if not dataset:
        raise ValidationError("dataset must not be empty")
    fA, DA = dataset[0].rel.shape
    if (fA, DA) != (weights.cfg.frames, weights.cfg.D):
        raise ValidationError(
            f"dataset frames/channels {(fA, DA)} do not match the model "
            f"{(weights.cfg.frames, weights.cfg.D)}"
        )
    rng = np.random.default_rng(cfg.seed)
    opt = Optimizer(cfg=cfg)
    weights.require_grad(True)
    history: dict[str, list[float]] = {"whole": [], "con": [], "foot": [], "total": []}
    n = len(dataset)
    embedder = HashedBagOfWords(dim=weights.cfg.text_dim)
    embedded = [embed_text(s.text, embedder) for s in dataset]
    null = null_text(weights.cfg.text_dim)
    try:
        for step in range(cfg.steps):
            if cfg.batch_size is None or cfg.batch_size >= n:
                idx = np.arange(n)
            else:
                idx = rng.choice(n, size=cfg.batch_size, replace=False)
            batch = [dataset[i] for i in idx]
            t = rng.integers(0, sched.T, size=len(batch))
            eps = rng.standard_normal((len(batch), fA, DA))
            drop = rng.random(len(batch)) < cfg.p_uncond
            texts = [null if d else embedded[i] for i, d in zip(idx, drop)]
            loss, parts = training_loss(
                weights, batch, t, eps, texts, sched, skel, loss_weights
            )
            if not np.isfinite(parts["total"]):
                raise TrainingDivergedError(step, f"loss parts {parts}")
            loss.backward()
            opt.apply(weights.params)
            for p in weights.params.values():
                p.grad = None
            for key, val in parts.items():
                history[key].append(val)
            if cfg.log_every and step % cfg.log_every == 0:
                log.info(
                    "step %d total %.6f whole %.6f con %.6f foot %.6f",
                    step, parts["total"], parts["whole"], parts["con"], parts["foot"],
                )
    finally:
        weights.require_grad(False)
    return history
