"""Evaluation metrics for generated motion and spatial control accuracy.

Distribution metrics (FID, R-precision, Diversity) operate on
:class:`FeatureSet` matrices from pluggable extractors.  The built-in
extractor is a deterministic handcrafted 64-dim kinematic summary — scores
it produces are only comparable to scores computed with the same extractor,
never to numbers from learned feature spaces (a warning is emitted once).

Control accuracy metrics (trajectory / location / average error) and the
foot skating ratio operate directly on global motion.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .motion import GlobalMotion
from .skeleton import Skeleton
from .textemb import HashedBagOfWords

DEFAULT_FID_RIDGE = 1e-10
DEFAULT_POOL_SIZE = 32
DEFAULT_SUBSET_PAIRS = 300
DEFAULT_FOOT_H = 0.05  # meters
DEFAULT_FOOT_SLIDE = 0.0025  # meters per frame
DEFAULT_SPATIAL_THRESHOLD = 0.5  # meters
FEATURE_DIM = 64

_warned_handcrafted = False


@dataclass(frozen=True)
class FeatureSet:
    """N feature vectors from one extractor."""

    matrix: np.ndarray  # (N, d)
    extractor_id: str = "unknown"

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2 or m.shape[0] < 1:
            raise ValidationError(f"feature matrix must be (N>=1, d), got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValidationError("feature matrix contains non-finite values")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class SpatialErrorReport:
    """Control accuracy summary; ``defined`` is False when no entry is masked."""

    traj_err_ratio: float
    loc_err_ratio: float
    avg_err_m: float
    threshold_m: float
    n_controlled: int
    defined: bool = True

    def to_dict(self) -> dict:
        return {
            "traj_err_ratio": self.traj_err_ratio,
            "loc_err_ratio": self.loc_err_ratio,
            "avg_err_m": self.avg_err_m,
            "threshold_m": self.threshold_m,
            "n_controlled": self.n_controlled,
            "defined": self.defined,
        }


# ----------------------------------------------------------------------
# distribution metrics
def _mean_cov(feats: FeatureSet, ridge: float) -> tuple[np.ndarray, np.ndarray]:
    mu = feats.matrix.mean(axis=0)
    cov = np.cov(feats.matrix, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov) + ridge * np.eye(feats.dim)
    return mu, cov


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid(real: FeatureSet, gen: FeatureSet, ridge: float = DEFAULT_FID_RIDGE) -> float:
    """Fréchet distance between Gaussians fitted to two feature sets.

    ||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S2^1/2 S1 S2^1/2)^1/2), computed via
    eigendecomposition with negative eigenvalues clamped to zero and an
    epsilon ridge on both covariances.  Symmetric and >= 0 up to numerics.
    """
    if real.dim != gen.dim:
        raise ValidationError(f"feature dims differ: {real.dim} vs {gen.dim}")
    if real.n < 2 or gen.n < 2:
        raise ValidationError("fid needs at least 2 samples per set")
    mu1, cov1 = _mean_cov(real, ridge)
    mu2, cov2 = _mean_cov(gen, ridge)
    s2h = _psd_sqrt(cov2)
    inner = _psd_sqrt(s2h @ cov1 @ s2h)
    diff = mu1 - mu2
    value = float(diff @ diff + np.trace(cov1) + np.trace(cov2) - 2.0 * np.trace(inner))
    return max(value, 0.0)


def r_precision(
    motion_feats: FeatureSet,
    text_feats: FeatureSet,
    pool_size: int = DEFAULT_POOL_SIZE,
    ks: tuple[int, ...] = (1, 2, 3),
    rng: np.random.Generator | None = None,
) -> dict[int, float]:
    """Retrieval accuracy of each motion's own text within a distractor pool.

    For motion i the candidate pool is its true text plus ``pool_size - 1``
    distinct sampled negatives; distances are Euclidean and ties are broken
    by a seeded shuffle of the candidate order.
    """
    if motion_feats.n != text_feats.n:
        raise ValidationError("motion and text feature sets must be aligned")
    if motion_feats.n < pool_size:
        raise ValidationError(
            f"need at least pool_size={pool_size} pairs, got {motion_feats.n}"
        )
    rng = np.random.default_rng(0) if rng is None else rng
    n = motion_feats.n
    hits = {k: 0 for k in ks}
    for i in range(n):
        others = np.delete(np.arange(n), i)
        negatives = rng.choice(others, size=pool_size - 1, replace=False)
        candidates = np.concatenate([[i], negatives])
        dists = np.linalg.norm(
            text_feats.matrix[candidates] - motion_feats.matrix[i], axis=1
        )
        order = rng.permutation(pool_size)  # random tie-break baseline order
        ranked = candidates[order][np.argsort(dists[order], kind="stable")]
        position = int(np.nonzero(ranked == i)[0][0])
        for k in ks:
            if position < k:
                hits[k] += 1
    return {k: hits[k] / n for k in ks}


def diversity(
    feats: FeatureSet,
    subset_pairs: int = DEFAULT_SUBSET_PAIRS,
    rng: np.random.Generator | None = None,
) -> float:
    """Mean Euclidean distance over seeded disjoint sample pairs."""
    if feats.n < 2:
        raise ValidationError("diversity needs at least 2 samples")
    rng = np.random.default_rng(0) if rng is None else rng
    m = min(subset_pairs, feats.n // 2)
    perm = rng.permutation(feats.n)
    first = feats.matrix[perm[:m]]
    second = feats.matrix[perm[m:2 * m]]
    return float(np.linalg.norm(first - second, axis=1).mean())


# ----------------------------------------------------------------------
# kinematic metrics
def foot_skating_ratio(
    glob: GlobalMotion,
    skel: Skeleton,
    h: float = DEFAULT_FOOT_H,
    slide: float = DEFAULT_FOOT_SLIDE,
) -> float:
    """Fraction of frame transitions where a grounded foot slides.

    A transition skates when any foot joint sits below height ``h`` and its
    ground-plane displacement to the next frame exceeds ``slide``.
    """
    pos = glob.positions
    if len(pos) < 2:
        return 0.0
    feet = sorted(set(skel.foot_joints))
    fp = pos[:, feet, :]  # (f, nf, 3)
    low = fp[:-1, :, 1] < h
    disp = np.hypot(
        fp[1:, :, 0] - fp[:-1, :, 0], fp[1:, :, 2] - fp[:-1, :, 2]
    )
    skate = np.any(low & (disp > slide), axis=1)
    return float(skate.mean())


def spatial_errors(
    glob: GlobalMotion | np.ndarray,
    control: np.ndarray,
    mask: np.ndarray,
    threshold: float = DEFAULT_SPATIAL_THRESHOLD,
) -> SpatialErrorReport:
    """Control accuracy of one sequence against its spatial targets.

    ``loc_err_ratio`` is the fraction of controlled entries whose distance
    strictly exceeds the threshold; ``traj_err_ratio`` is 1 if any entry
    does, else 0; ``avg_err_m`` is the mean distance.  An empty mask yields
    a report flagged undefined.
    """
    pos = glob.positions if isinstance(glob, GlobalMotion) else np.asarray(glob)
    control = np.asarray(control, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if control.shape != pos.shape:
        raise ValidationError(f"control shape {control.shape} != motion {pos.shape}")
    if mask.shape != pos.shape[:2]:
        raise ValidationError(f"mask shape {mask.shape} != {pos.shape[:2]}")
    sel = mask == 1.0
    n_controlled = int(sel.sum())
    if n_controlled == 0:
        return SpatialErrorReport(
            traj_err_ratio=float("nan"),
            loc_err_ratio=float("nan"),
            avg_err_m=float("nan"),
            threshold_m=threshold,
            n_controlled=0,
            defined=False,
        )
    dist = np.linalg.norm(pos[sel] - control[sel], axis=1)
    exceed = dist > threshold
    return SpatialErrorReport(
        traj_err_ratio=1.0 if bool(exceed.any()) else 0.0,
        loc_err_ratio=float(exceed.mean()),
        avg_err_m=float(dist.mean()),
        threshold_m=threshold,
        n_controlled=n_controlled,
    )


def spatial_errors_batch(
    globs: list[GlobalMotion] | np.ndarray,
    controls: np.ndarray,
    masks: np.ndarray,
    threshold: float = DEFAULT_SPATIAL_THRESHOLD,
) -> SpatialErrorReport:
    """Batch control accuracy: per-sequence binary traj error averaged,
    location/average errors pooled over all controlled entries."""
    reports = []
    for i in range(len(globs)):
        g = globs[i]
        reports.append(spatial_errors(g, controls[i], masks[i], threshold))
    defined = [r for r in reports if r.defined]
    if not defined:
        return SpatialErrorReport(float("nan"), float("nan"), float("nan"),
                                  threshold, 0, defined=False)
    total = sum(r.n_controlled for r in defined)
    loc = sum(r.loc_err_ratio * r.n_controlled for r in defined) / total
    avg = sum(r.avg_err_m * r.n_controlled for r in defined) / total
    traj = float(np.mean([r.traj_err_ratio for r in defined]))
    return SpatialErrorReport(traj, loc, avg, threshold, total)


# ----------------------------------------------------------------------
# default feature extractors
def _resample(values: np.ndarray, size: int) -> np.ndarray:
    """Deterministically resample a 1-D stat vector to a fixed length."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) == size:
        return values.copy()
    xs = np.linspace(0.0, 1.0, len(values)) if len(values) > 1 else np.array([0.0])
    xq = np.linspace(0.0, 1.0, size)
    return np.interp(xq, xs, values)


def motion_features(glob: GlobalMotion, fps: float = 20.0) -> np.ndarray:
    """Handcrafted 64-dim kinematic summary of one sequence.

    Layout: [0:16] per-joint mean speed resampled to 16; [16:32] per-joint
    speed std resampled to 16; [32:48] root-speed histogram (16 bins over
    0..2 m/s); [48:56] joint-to-root distance profile resampled to 8;
    [56:60] root height mean/std/min/max; [60:63] mean bounding-box extents;
    [63] overall mean speed.
    """
    global _warned_handcrafted
    if not _warned_handcrafted:
        warnings.warn(
            "using the handcrafted kinematic feature extractor: FID and "
            "R-precision values are only comparable to scores computed with "
            "this same extractor",
            RuntimeWarning,
            stacklevel=2,
        )
        _warned_handcrafted = True
    pos = glob.positions
    f = len(pos)
    vel = (pos[1:] - pos[:-1]) * fps if f > 1 else np.zeros((1,) + pos.shape[1:])
    speed = np.linalg.norm(vel, axis=2)  # (f-1, J)
    per_joint_mean = speed.mean(axis=0)
    per_joint_std = speed.std(axis=0)
    root_speed = speed[:, 0]
    hist, _ = np.histogram(root_speed, bins=16, range=(0.0, 2.0))
    hist = hist / max(len(root_speed), 1)
    to_root = np.linalg.norm(pos - pos[:, :1, :], axis=2).mean(axis=0)  # (J,)
    root_h = pos[:, 0, 1]
    extents = (pos.max(axis=(0, 1)) - pos.min(axis=(0, 1)))
    out = np.concatenate([
        _resample(per_joint_mean, 16),
        _resample(per_joint_std, 16),
        hist,
        _resample(to_root, 8),
        [root_h.mean(), root_h.std(), root_h.min(), root_h.max()],
        extents,
        [speed.mean()],
    ])
    assert out.shape == (FEATURE_DIM,)
    return out


def motion_feature_set(globs: list[GlobalMotion], fps: float = 20.0) -> FeatureSet:
    return FeatureSet(
        matrix=np.stack([motion_features(g, fps) for g in globs]),
        extractor_id="kinematic-v1",
    )


def text_feature_set(texts: list[str], dim: int = FEATURE_DIM, seed: int = 0) -> FeatureSet:
    """Hashed bag-of-words embeddings projected to ``dim`` with a seeded map."""
    embedder = HashedBagOfWords(dim=512)
    base = np.stack([embedder.embed(t) for t in texts])
    rng = np.random.default_rng(seed)
    proj = rng.standard_normal((512, dim)) / np.sqrt(512)
    return FeatureSet(matrix=base @ proj, extractor_id=f"hashed-text-{seed}")
