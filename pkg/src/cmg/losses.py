"""Training objective: reconstruction + control adherence + foot stability.

total = lw_whole * L_whole + lw_con * L_con + lw_foot * L_foot

* L_whole: mean squared error between the predicted and true clean sample,
  in relative channel space.
* L_con: distance between controlled joints and their targets, measured in
  world coordinates after the differentiable relative -> global conversion.
  ``normalized`` (default) averages per-entry Euclidean distances over the
  masked entries; ``literal`` multiplies the joint norm of all masked
  residuals by the masked-entry count instead.
* L_foot: displacement of feet that sit below ``h_thresh`` across
  consecutive frames.  ``normalized`` (default) averages over all
  (frame, foot) terms; ``literal`` is the raw sum.  The height gate is a
  constant during differentiation (subgradient convention).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ValidationError
from .motion import relative_to_global_tensor
from .skeleton import Skeleton

CON_MODES = ("normalized", "literal")
FOOT_MODES = ("normalized", "literal")


@dataclass(frozen=True)
class LossWeights:
    lambda_whole: float = 1.0
    lambda_con: float = 1.0
    lambda_foot: float = 1.0
    h_thresh: float = 0.05
    con_mode: str = "normalized"
    foot_mode: str = "normalized"

    def __post_init__(self):
        if self.con_mode not in CON_MODES:
            raise ValidationError(f"con_mode must be one of {CON_MODES}")
        if self.foot_mode not in FOOT_MODES:
            raise ValidationError(f"foot_mode must be one of {FOOT_MODES}")


def loss_whole(x0_hat: ad.Tensor, x_gt: np.ndarray) -> ad.Tensor:
    diff = ad.sub(x0_hat, np.asarray(x_gt, dtype=np.float64))
    return ad.tmean(ad.mul(diff, diff))


def loss_con(
    glob_hat: ad.Tensor,
    control: np.ndarray,
    mask: np.ndarray,
    mode: str = "normalized",
) -> ad.Tensor:
    """Control adherence in world coordinates.

    ``glob_hat`` (..., f, J, 3), ``control`` same shape, ``mask`` (..., f, J).
    Entries with mask 0 contribute nothing; an all-zero mask gives 0.
    """
    m = np.asarray(mask, dtype=np.float64)
    c = np.asarray(control, dtype=np.float64) * m[..., None]
    anchored = ad.mul(glob_hat, m[..., None])
    diff = ad.sub(anchored, c)
    total_masked = float(m.sum())
    if total_masked == 0.0:
        return ad.mul(ad.tsum(diff), 0.0)
    if mode == "literal":
        flat = ad.reshape(diff, (int(np.prod(diff.shape)),))
        return ad.mul(ad.l2norm(flat, axis=-1), total_masked)
    dist = ad.l2norm(diff, axis=-1)  # (..., f, J)
    return ad.mul(ad.tsum(ad.mul(dist, m)), 1.0 / total_masked)


def loss_foot(
    glob_hat: ad.Tensor,
    skel: Skeleton,
    h_thresh: float = 0.05,
    mode: str = "normalized",
) -> ad.Tensor:
    """Sliding of grounded feet: gated consecutive-frame displacement."""
    feet = sorted(set(skel.foot_joints))
    foot_pos = glob_hat[..., feet, :]  # (..., f, n_feet, 3)
    f = foot_pos.shape[-3]
    if f < 2:
        return ad.mul(ad.tsum(foot_pos), 0.0)
    nxt = foot_pos[..., 1:, :, :]
    cur = foot_pos[..., :-1, :, :]
    disp = ad.l2norm(ad.sub(nxt, cur), axis=-1)  # (..., f-1, n_feet)
    grounded = (foot_pos.value[..., :-1, :, 1] < h_thresh).astype(np.float64)
    gated = ad.mul(disp, grounded)
    if mode == "literal":
        if gated.ndim > 2:  # batched: mean over batch, sum within sequence
            return ad.tmean(ad.tsum(gated, axis=(-2, -1)))
        return ad.tsum(gated)
    count = (f - 1) * len(feet)
    if gated.ndim > 2:
        return ad.mul(ad.tmean(ad.tsum(gated, axis=(-2, -1))), 1.0 / count)
    return ad.mul(ad.tsum(gated), 1.0 / count)


def loss_total(
    x0_hat: ad.Tensor,
    x_gt: np.ndarray,
    control: np.ndarray,
    mask: np.ndarray,
    skel: Skeleton,
    weights: LossWeights = LossWeights(),
) -> tuple[ad.Tensor, dict[str, float]]:
    """Weighted sum of the three parts plus a float snapshot of each."""
    if x0_hat.shape[-1] != 12 * skel.J - 1:
        raise ValidationError("x0_hat channel dimension does not match the skeleton")
    glob_hat = relative_to_global_tensor(x0_hat, skel.J)
    lw = loss_whole(x0_hat, x_gt)
    lc = loss_con(glob_hat, control, mask, mode=weights.con_mode)
    lf = loss_foot(glob_hat, skel, h_thresh=weights.h_thresh, mode=weights.foot_mode)
    total = ad.add(
        ad.add(ad.mul(lw, weights.lambda_whole), ad.mul(lc, weights.lambda_con)),
        ad.mul(lf, weights.lambda_foot),
    )
    parts = {
        "whole": float(lw.value),
        "con": float(lc.value),
        "foot": float(lf.value),
        "total": float(total.value),
    }
    return total, parts
