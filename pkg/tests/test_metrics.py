"""Evaluation metrics: FID, retrieval precision, diversity, control accuracy."""

from __future__ import annotations

import warnings

import numpy as np
import pytest
import scipy.linalg

import cmg.metrics as metrics
from cmg.errors import ValidationError
from cmg.metrics import (
    FeatureSet,
    diversity,
    fid,
    foot_skating_ratio,
    motion_feature_set,
    motion_features,
    r_precision,
    spatial_errors,
    spatial_errors_batch,
    text_feature_set,
)
from cmg.motion import GlobalMotion
from conftest import smooth_global_motion


def feats(matrix):
    return FeatureSet(matrix=np.asarray(matrix, dtype=np.float64))


# --------------------------------------------------------------------- FID


def test_fid_of_identical_sets_is_zero():
    m = np.random.default_rng(0).standard_normal((20, 6))
    assert fid(feats(m), feats(m)) < 1e-8


def test_fid_one_dimensional_analytic():
    # sample stats: means 1 and 4, equal variances -> FID = (4-1)^2 = 9
    a = feats([[0.0], [2.0]])
    b = feats([[3.0], [5.0]])
    assert fid(a, b) == pytest.approx(9.0, abs=1e-8)
    # unequal variances: (1-5)^2 + 2 + 8 - 2*sqrt(16) = 18
    c = feats([[3.0], [7.0]])
    assert fid(a, c) == pytest.approx(18.0, abs=1e-6)


def test_fid_matches_scipy_sqrtm_oracle():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((40, 6))
    b = rng.standard_normal((50, 6)) @ rng.standard_normal((6, 6)) + 0.7

    def oracle(x, y, ridge=1e-10):
        mu1, mu2 = x.mean(axis=0), y.mean(axis=0)
        c1 = np.cov(x, rowvar=False) + ridge * np.eye(x.shape[1])
        c2 = np.cov(y, rowvar=False) + ridge * np.eye(y.shape[1])
        s2h = np.real(scipy.linalg.sqrtm(c2))
        inner = np.real(scipy.linalg.sqrtm(s2h @ c1 @ s2h))
        d = mu1 - mu2
        return float(d @ d + np.trace(c1) + np.trace(c2) - 2.0 * np.trace(inner))

    got = fid(feats(a), feats(b))
    assert got == pytest.approx(oracle(a, b), rel=1e-6)


def test_fid_symmetry_and_pure_shift():
    rng = np.random.default_rng(4)
    a = rng.standard_normal((30, 5))
    shift = np.array([1.0, -2.0, 0.5, 0.0, 3.0])
    b = a + shift
    assert fid(feats(a), feats(b)) == pytest.approx(float(shift @ shift), abs=1e-6)
    c = rng.standard_normal((25, 5))
    assert fid(feats(a), feats(c)) == pytest.approx(fid(feats(c), feats(a)), rel=1e-9)


def test_fid_validation():
    rng = np.random.default_rng(5)
    with pytest.raises(ValidationError):
        fid(feats(rng.standard_normal((10, 3))), feats(rng.standard_normal((10, 4))))
    with pytest.raises(ValidationError):
        fid(feats(rng.standard_normal((1, 3))), feats(rng.standard_normal((10, 3))))
    with pytest.raises(ValidationError):
        FeatureSet(matrix=np.array([[np.inf, 0.0]]))
    with pytest.raises(ValidationError):
        FeatureSet(matrix=np.zeros(4))


# --------------------------------------------------------------- retrieval


def test_r_precision_perfect_when_texts_equal_motions():
    m = np.random.default_rng(6).standard_normal((40, 8))
    scores = r_precision(feats(m), feats(m), pool_size=8)
    assert scores == {1: 1.0, 2: 1.0, 3: 1.0}


def test_r_precision_monotone_in_k():
    rng = np.random.default_rng(7)
    motion = rng.standard_normal((48, 8))
    text = motion + rng.normal(scale=2.0, size=motion.shape)
    scores = r_precision(feats(motion), feats(text), pool_size=16,
                         rng=np.random.default_rng(0))
    assert scores[1] <= scores[2] <= scores[3]
    assert all(0.0 <= v <= 1.0 for v in scores.values())


def test_r_precision_near_chance_for_unrelated_texts():
    rng = np.random.default_rng(8)
    motion = rng.standard_normal((96, 8))
    text = rng.standard_normal((96, 8))
    scores = r_precision(feats(motion), feats(text), pool_size=32,
                         rng=np.random.default_rng(1))
    assert scores[1] < 0.2  # chance is 1/32


def test_r_precision_seeded_determinism_and_validation():
    rng = np.random.default_rng(9)
    motion = rng.standard_normal((40, 4))
    text = rng.standard_normal((40, 4))
    a = r_precision(feats(motion), feats(text), pool_size=8,
                    rng=np.random.default_rng(3))
    b = r_precision(feats(motion), feats(text), pool_size=8,
                    rng=np.random.default_rng(3))
    assert a == b
    with pytest.raises(ValidationError):
        r_precision(feats(motion), feats(text[:39]))
    with pytest.raises(ValidationError):
        r_precision(feats(motion), feats(text), pool_size=41)


# --------------------------------------------------------------- diversity


def test_diversity_zero_for_identical_samples():
    m = np.ones((10, 5))
    assert diversity(feats(m)) == 0.0


def test_diversity_two_samples_is_their_distance():
    m = np.array([[0.0, 0.0], [3.0, 4.0]])
    assert diversity(feats(m)) == pytest.approx(5.0)


def test_diversity_matches_seeded_oracle():
    rng = np.random.default_rng(10)
    m = rng.standard_normal((30, 6))
    got = diversity(feats(m), subset_pairs=10, rng=np.random.default_rng(2))
    perm = np.random.default_rng(2).permutation(30)
    want = float(np.linalg.norm(m[perm[:10]] - m[perm[10:20]], axis=1).mean())
    assert got == pytest.approx(want, rel=1e-12)
    with pytest.raises(ValidationError):
        diversity(feats(m[:1]))


# ------------------------------------------------------------ foot skating


def test_foot_skating_zero_for_static_grounded(skel22):
    rest = skel22.rest_positions() + np.array([0.0, skel22.rest_root_height(), 0.0])
    pos = np.tile(rest, (20, 1, 1))
    assert foot_skating_ratio(GlobalMotion(positions=pos, fps=20.0), skel22) == 0.0


def _foot_motion(skel, y, step):
    """All feet at height y, exactly `step` meters of x travel per frame."""
    frames = 11
    pos = np.tile(skel.rest_positions() + np.array([0.0, 1.0, 0.0]),
                  (frames, 1, 1))
    feet = sorted(set(skel.foot_joints))
    pos[:, feet, 1] = y
    # overwrite (not offset) so per-frame deltas are bit-exact
    pos[:, feet, 0] = (step * np.arange(frames))[:, None]
    pos[:, feet, 2] = 0.0
    return GlobalMotion(positions=pos, fps=20.0)


def test_foot_skating_one_when_grounded_feet_slide(skel22):
    glob = _foot_motion(skel22, y=0.01, step=0.05)
    assert foot_skating_ratio(glob, skel22) == 1.0


def test_foot_skating_ignores_airborne_feet(skel22):
    glob = _foot_motion(skel22, y=0.3, step=0.05)
    assert foot_skating_ratio(glob, skel22) == 0.0


def test_foot_skating_thresholds_are_strict(skel22):
    at_height = _foot_motion(skel22, y=0.05, step=0.05)  # exactly h: not low
    assert foot_skating_ratio(at_height, skel22, h=0.05) == 0.0
    dyadic = 1.0 / 512.0  # binary-exact step keeps deltas == threshold
    at_slide = _foot_motion(skel22, y=0.01, step=dyadic)
    assert foot_skating_ratio(at_slide, skel22, slide=dyadic) == 0.0
    over = _foot_motion(skel22, y=0.01, step=2.0 * dyadic)
    assert foot_skating_ratio(over, skel22, slide=dyadic) == 1.0


def test_foot_skating_single_frame_is_zero(skel22):
    pos = skel22.rest_positions()[None] + np.array([0.0, 1.0, 0.0])
    assert foot_skating_ratio(GlobalMotion(positions=pos, fps=20.0), skel22) == 0.0


# ---------------------------------------------------------- control errors


def test_spatial_errors_hand_case():
    pos = np.zeros((2, 2, 3))
    control = np.zeros((2, 2, 3))
    mask = np.ones((2, 2))
    control[0, 0, 0] = 0.6  # one entry exceeds the 0.5 m threshold
    report = spatial_errors(pos, control, mask)
    assert report.traj_err_ratio == 1.0
    assert report.loc_err_ratio == 0.25
    assert report.avg_err_m == pytest.approx(0.15)
    assert report.n_controlled == 4
    assert report.defined


def test_spatial_errors_all_within_threshold():
    pos = np.zeros((3, 2, 3))
    control = np.full((3, 2, 3), 0.1)
    report = spatial_errors(pos, control, np.ones((3, 2)))
    assert report.traj_err_ratio == 0.0
    assert report.loc_err_ratio == 0.0
    assert report.avg_err_m == pytest.approx(np.sqrt(3) * 0.1)


def test_spatial_errors_empty_mask_is_undefined():
    report = spatial_errors(np.zeros((3, 2, 3)), np.zeros((3, 2, 3)),
                            np.zeros((3, 2)))
    assert not report.defined
    assert report.n_controlled == 0
    assert np.isnan(report.avg_err_m)
    doc = report.to_dict()
    assert doc["defined"] is False


def test_spatial_errors_ignores_unmasked_entries():
    pos = np.zeros((2, 2, 3))
    control = np.full((2, 2, 3), 100.0)
    mask = np.zeros((2, 2))
    mask[0, 0] = 1.0
    control[0, 0] = (0.0, 0.0, 0.3)
    report = spatial_errors(pos, control, mask)
    assert report.avg_err_m == pytest.approx(0.3)
    assert report.loc_err_ratio == 0.0


def test_spatial_errors_batch_pooling():
    # sequence A: 1 entry at 0.6 (exceeds); sequence B: 3 entries at 0.1
    pos = np.zeros((2, 3, 1, 3))
    controls = np.zeros((2, 3, 1, 3))
    masks = np.zeros((2, 3, 1))
    masks[0, 0, 0] = 1.0
    controls[0, 0, 0, 0] = 0.6
    masks[1, :, 0] = 1.0
    controls[1, :, 0, 1] = 0.1
    report = spatial_errors_batch(list(pos), controls, masks)
    assert report.traj_err_ratio == pytest.approx(0.5)  # mean of [1, 0]
    assert report.loc_err_ratio == pytest.approx(0.25)  # 1 of 4 pooled entries
    assert report.avg_err_m == pytest.approx((0.6 + 3 * 0.1) / 4)
    assert report.n_controlled == 4


def test_spatial_errors_validation():
    with pytest.raises(ValidationError):
        spatial_errors(np.zeros((2, 2, 3)), np.zeros((2, 3, 3)), np.ones((2, 2)))
    with pytest.raises(ValidationError):
        spatial_errors(np.zeros((2, 2, 3)), np.zeros((2, 2, 3)), np.ones((2, 3)))


# ------------------------------------------------------------------ features


@pytest.mark.filterwarnings("ignore:using the handcrafted")
def test_motion_features_shape_and_determinism(skel22):
    glob = smooth_global_motion(skel22, frames=24, seed=3)
    a = motion_features(glob)
    b = motion_features(glob)
    assert a.shape == (64,)
    assert np.array_equal(a, b)
    assert np.all(np.isfinite(a))


def test_motion_feature_set_and_warning(skel22):
    metrics._warned_handcrafted = False
    globs = [smooth_global_motion(skel22, frames=16, seed=s) for s in range(3)]
    with pytest.warns(RuntimeWarning, match="same extractor"):
        fs = motion_feature_set(globs)
    assert fs.matrix.shape == (3, 64)
    assert fs.extractor_id == "kinematic-v1"
    with warnings.catch_warnings():  # warned once already: stays silent
        warnings.simplefilter("error", RuntimeWarning)
        motion_feature_set(globs)


def test_text_feature_set_deterministic():
    texts = ["people walking in the park", "a queue at the market"]
    a = text_feature_set(texts)
    b = text_feature_set(texts)
    assert a.matrix.shape == (2, 64)
    assert np.array_equal(a.matrix, b.matrix)
    assert not np.allclose(a.matrix[0], a.matrix[1])
    c = text_feature_set(texts, seed=1)
    assert not np.allclose(a.matrix, c.matrix)
