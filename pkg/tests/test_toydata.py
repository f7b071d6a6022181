"""Synthetic grounded dataset: physical plausibility and aligned controls."""

from __future__ import annotations

import numpy as np
import pytest

from cmg.losses import loss_foot
from cmg.metrics import foot_skating_ratio
from cmg.motion import RelativeMotion, relative_to_global, relative_to_global_tensor
from cmg.toydata import TOY_TEXTS, make_toy_dataset, make_toy_motion, make_toy_skeleton

from cmg import autodiff as ad


def test_toy_skeleton_is_valid():
    skel = make_toy_skeleton()  # construction runs the integrity checks
    assert skel.J == 4
    assert sorted(set(skel.foot_joints)) == [2, 3]


def test_dataset_shapes_and_texts(skel22):
    samples, globs = make_toy_dataset(skel22, n=8, frames=30, seed=0)
    assert len(samples) == 8 and len(globs) == 8
    for i, s in enumerate(samples):
        assert s.rel.shape == (30, 263)
        assert s.control.shape == (30, 22, 3)
        assert s.mask.shape == (30, 22)
        assert s.text == TOY_TEXTS[i]
    assert len({s.text for s in samples}) == 8


def test_feet_stay_grounded_and_still(skel22):
    samples, globs = make_toy_dataset(skel22, n=4, frames=40, seed=1)
    feet = sorted(set(skel22.foot_joints))
    for glob in globs:
        fp = glob.positions[:, feet, :]
        assert np.all(fp[:, :, 1] < 0.08)  # near the ground
        assert np.allclose(fp, fp[0], atol=1e-12)  # perfectly planted
        assert foot_skating_ratio(glob, skel22) == 0.0


def test_relative_truth_has_zero_foot_loss(skel22):
    samples, _ = make_toy_dataset(skel22, n=2, frames=30, seed=2)
    batch = np.stack([s.rel for s in samples])
    glob_hat = relative_to_global_tensor(ad.Tensor(batch), skel22.J)
    value = loss_foot(glob_hat, skel22, h_thresh=0.05)
    assert float(value.value) == pytest.approx(0.0, abs=1e-10)


def test_control_targets_equal_true_motion(skel22):
    samples, globs = make_toy_dataset(skel22, n=6, frames=24, seed=3)
    for s, glob in zip(samples, globs):
        sel = s.mask == 1.0
        assert np.array_equal(s.control[sel], glob.positions[sel])
        assert np.all(s.mask[:, 0] == 1.0)  # pelvis controlled at every frame
        assert sel.sum() == 24 + 1  # plus exactly one wrist keyframe


def test_relative_encoding_round_trips_exactly(skel22):
    samples, globs = make_toy_dataset(skel22, n=3, frames=20, seed=4)
    for s, glob in zip(samples, globs):
        back = relative_to_global(RelativeMotion(data=s.rel, fps=20.0), skel22)
        assert np.allclose(back.positions, glob.positions, atol=1e-9)


def test_dataset_is_deterministic(skel22):
    a, _ = make_toy_dataset(skel22, n=3, frames=20, seed=5)
    b, _ = make_toy_dataset(skel22, n=3, frames=20, seed=5)
    for s1, s2 in zip(a, b):
        assert np.array_equal(s1.rel, s2.rel)
        assert np.array_equal(s1.control, s2.control)
    c, _ = make_toy_dataset(skel22, n=3, frames=20, seed=6)
    assert not np.array_equal(a[0].rel, c[0].rel)


def test_arm_amplitude_moves_wrists(skel22):
    still = make_toy_motion(skel22, 30, 0.0, 0.0, 0.4)
    waving = make_toy_motion(skel22, 30, 0.8, 0.0, 0.4)
    lw = list(skel22.names).index("left_wrist")
    rw = list(skel22.names).index("right_wrist")
    assert np.allclose(still.positions, still.positions[0])
    moved = np.abs(waving.positions[:, lw] - waving.positions[0, lw]).max()
    assert moved > 0.1
    assert np.allclose(waving.positions[:, rw], waving.positions[0, rw])


def test_toy_skeleton_dataset_lacks_wrist_keyframes():
    skel = make_toy_skeleton()
    samples, _ = make_toy_dataset(skel, n=2, frames=10, seed=0)
    for s in samples:
        assert s.mask.sum() == 10  # pelvis only; no wrists on this skeleton
