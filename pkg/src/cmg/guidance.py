"""Inverse-kinematics guidance: nudge a clean prediction toward controls.

The discrepancy between a relative-channel prediction mu and the spatial
targets is measured in world coordinates::

    D = sum_ij O_ij * ||c_ij - world(mu)_ij||_2 / sum_ij O_ij

where O is the control mask.  ``ik_guide`` runs a few gradient-descent
steps on mu, differentiating D through the relative -> global conversion,
so corrections propagate into root velocities and earlier frames rather
than just the targeted entries.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ValidationError
from .motion import joints_for_dims, relative_to_global_tensor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GuidanceConfig:
    eta: float = 0.01
    inner_steps: int = 5
    last_n: int = 10  # apply during this many final sampling iterations
    clamp: float | None = None  # max Frobenius norm of one update, meters

    def __post_init__(self):
        if self.eta < 0 or self.inner_steps < 0 or self.last_n < 0:
            raise ValidationError("eta, inner_steps and last_n must be >= 0")
        if self.clamp is not None and self.clamp <= 0:
            raise ValidationError("clamp must be positive when set")


@dataclass
class DiscrepancyResult:
    value: float
    n_controlled: int

    @property
    def no_control(self) -> bool:
        return self.n_controlled == 0


@dataclass
class GuidanceTrace:
    mu: np.ndarray
    d_values: list[float] = field(default_factory=list)
    applied: bool = False


def _check_inputs(mu_rel: np.ndarray, control: np.ndarray, o_mask: np.ndarray) -> int:
    if mu_rel.ndim != 2:
        raise ValidationError("mu must be a (frames, D) array")
    J = joints_for_dims(mu_rel.shape[1])
    f = mu_rel.shape[0]
    if control.shape != (f, J, 3):
        raise ValidationError(f"control must be ({f}, {J}, 3), got {control.shape}")
    if o_mask.shape != (f, J):
        raise ValidationError(f"mask must be ({f}, {J}), got {o_mask.shape}")
    if not np.all((o_mask == 0.0) | (o_mask == 1.0)):
        raise ValidationError("mask entries must be exactly 0 or 1")
    return J


def _discrepancy_tensor(
    mu: ad.Tensor, control: np.ndarray, o_mask: np.ndarray, J: int
) -> ad.Tensor:
    glob = relative_to_global_tensor(mu, J)
    m = np.asarray(o_mask, dtype=np.float64)
    c = np.asarray(control, dtype=np.float64) * m[..., None]
    diff = ad.sub(ad.mul(glob, m[..., None]), c)
    dist = ad.l2norm(diff, axis=-1)
    return ad.mul(ad.tsum(ad.mul(dist, m)), 1.0 / m.sum())


def ik_discrepancy(
    mu_rel: np.ndarray, control: np.ndarray, o_mask: np.ndarray
) -> DiscrepancyResult:
    """Mean world-space distance over controlled entries; 0 when none."""
    mu_rel = np.asarray(mu_rel, dtype=np.float64)
    control = np.asarray(control, dtype=np.float64)
    o_mask = np.asarray(o_mask, dtype=np.float64)
    J = _check_inputs(mu_rel, control, o_mask)
    n = int(o_mask.sum())
    if n == 0:
        return DiscrepancyResult(value=0.0, n_controlled=0)
    d = _discrepancy_tensor(ad.Tensor(mu_rel), control, o_mask, J)
    return DiscrepancyResult(value=float(d.value), n_controlled=n)


def ik_discrepancy_grad(
    mu_rel: np.ndarray, control: np.ndarray, o_mask: np.ndarray
) -> tuple[float, np.ndarray]:
    """Discrepancy and its exact gradient with respect to every channel."""
    mu_rel = np.asarray(mu_rel, dtype=np.float64)
    J = _check_inputs(mu_rel, control, o_mask)
    if o_mask.sum() == 0:
        return 0.0, np.zeros_like(mu_rel)
    x = ad.Tensor(mu_rel.copy(), requires_grad=True)
    d = _discrepancy_tensor(x, control, o_mask, J)
    d.backward()
    return float(d.value), x.grad.copy()


def ik_guide(
    mu_rel: np.ndarray,
    control: np.ndarray,
    o_mask: np.ndarray,
    cfg: GuidanceConfig = GuidanceConfig(),
) -> GuidanceTrace:
    """Descend the discrepancy for ``cfg.inner_steps`` steps.

    A candidate step that fails to decrease D is retried at half the rate a
    few times, then guidance stops; the returned D sequence never increases.
    A non-finite gradient aborts guidance and returns the input unchanged.
    """
    mu_rel = np.asarray(mu_rel, dtype=np.float64)
    control = np.asarray(control, dtype=np.float64)
    o_mask = np.asarray(o_mask, dtype=np.float64)
    _check_inputs(mu_rel, control, o_mask)
    if o_mask.sum() == 0:
        return GuidanceTrace(mu=mu_rel.copy(), d_values=[0.0], applied=False)

    mu = mu_rel.copy()
    d_now, grad = ik_discrepancy_grad(mu, control, o_mask)
    trace = GuidanceTrace(mu=mu, d_values=[d_now], applied=True)
    for _ in range(cfg.inner_steps):
        if not np.all(np.isfinite(grad)):
            log.warning("ik guidance aborted: non-finite gradient; returning input")
            return GuidanceTrace(mu=mu_rel.copy(), d_values=[trace.d_values[0]], applied=False)
        eta = cfg.eta
        accepted = False
        for _ in range(4):
            step = eta * grad
            norm = float(np.linalg.norm(step))
            if cfg.clamp is not None and norm > cfg.clamp:
                step = step * (cfg.clamp / norm)
            candidate = mu - step
            d_new, grad_new = ik_discrepancy_grad(candidate, control, o_mask)
            if d_new <= d_now:
                mu, d_now, grad = candidate, d_new, grad_new
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            break
        trace.d_values.append(d_now)
    trace.mu = mu
    return trace
