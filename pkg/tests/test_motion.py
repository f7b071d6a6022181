"""Motion representation conversions and their round-trip identities."""

from __future__ import annotations

import numpy as np
import pytest

import cmg.autodiff as ad
from cmg.errors import ValidationError
from cmg.motion import (
    ChannelLayout,
    GlobalMotion,
    RelativeMotion,
    canonicalize_global,
    detect_foot_contacts,
    dims_for_joints,
    global_to_relative,
    joints_for_dims,
    relative_to_global,
    relative_to_global_tensor,
)
from conftest import finite_difference, relative_error, rng, smooth_global_motion


def test_dims_joints_mapping():
    assert dims_for_joints(22) == 263
    assert dims_for_joints(4) == 47
    assert joints_for_dims(263) == 22
    with pytest.raises(ValidationError):
        joints_for_dims(264)
    with pytest.raises(ValidationError):
        joints_for_dims(11)  # would give J=1


def test_channel_layout_partitions_every_channel():
    lay = ChannelLayout(J=22)
    slices = [lay.root, lay.positions, lay.velocities, lay.rotations, lay.contacts]
    covered = []
    for s in slices:
        covered.extend(range(s.start, s.stop))
    assert covered == list(range(lay.D))
    assert lay.root == slice(0, 4)
    assert lay.contacts == slice(lay.D - 4, lay.D)


def test_global_relative_global_round_trip_up_to_alignment(skel22):
    """Reconstruction reproduces the source up to a rigid alignment of
    frame 0 (the representation stores no absolute start or heading)."""
    glob = smooth_global_motion(skel22, frames=40, seed=3)
    rel = global_to_relative(glob, skel22)
    back = relative_to_global(rel, skel22)
    want = canonicalize_global(glob, skel22).positions
    err = float(np.max(np.abs(back.positions - want)))
    assert err < 1e-8, err


def test_relative_global_relative_round_trip(skel22):
    glob = smooth_global_motion(skel22, frames=25, seed=4)
    rel = global_to_relative(glob, skel22)
    rel2 = global_to_relative(relative_to_global(rel, skel22), skel22)
    err = float(np.max(np.abs(rel2.data - rel.data)))
    assert err < 1e-8, err


def test_round_trip_without_orientation_joints(skel4):
    """Without orientation joints the heading is defined as zero, so the
    only gauge freedom left is the frame-0 pelvis position."""
    glob = smooth_global_motion(skel4, frames=20, seed=5)
    rel = global_to_relative(glob, skel4)
    back = relative_to_global(rel, skel4)
    start = np.array([glob.positions[0, 0, 0], 0.0, glob.positions[0, 0, 2]])
    err = float(np.max(np.abs(back.positions - (glob.positions - start))))
    assert err < 1e-8, err


def test_translated_motion_changes_only_root_channels(skel22):
    """The representation is root-relative: a rigid xz translation leaves all
    channels except the per-frame root trace unchanged."""
    glob = smooth_global_motion(skel22, frames=15, seed=6)
    shifted = GlobalMotion(positions=glob.positions + np.array([3.0, 0.0, -2.0]),
                           fps=glob.fps)
    a = global_to_relative(glob, skel22).data
    b = global_to_relative(shifted, skel22).data
    lay = ChannelLayout(J=22)
    np.testing.assert_allclose(a[:, lay.positions], b[:, lay.positions], atol=1e-9)
    np.testing.assert_allclose(a[:, lay.rotations], b[:, lay.rotations], atol=1e-9)
    np.testing.assert_allclose(a[:, lay.contacts], b[:, lay.contacts], atol=1e-12)
    # the first frame's velocities encode the absolute start, so only
    # subsequent frames must match
    np.testing.assert_allclose(a[1:, lay.root], b[1:, lay.root], atol=1e-9)


def test_contact_channels_are_binary(skel22):
    glob = smooth_global_motion(skel22, frames=30, seed=7)
    rel = global_to_relative(glob, skel22)
    contacts = rel.data[:, ChannelLayout(J=22).contacts]
    assert set(np.unique(contacts)).issubset({0.0, 1.0})


def test_detect_foot_contacts_thresholds(skel4):
    f = 10
    pos = np.zeros((f, skel4.J, 3))
    pos[:, :, 1] = 1.0  # everything high
    left, right = skel4.foot_left[0], skel4.foot_right[0]
    # left foot grounded and still -> contact
    pos[:, left, 1] = 0.01
    # right foot grounded but sliding fast -> no contact
    pos[:, right, 1] = 0.01
    pos[:, right, 0] = np.arange(f) * 0.1
    contacts = detect_foot_contacts(GlobalMotion(positions=pos), skel4)
    assert contacts.shape == (f, 4)  # (left ankle, left toe, right ankle, right toe)
    assert np.all(contacts[:, :2] == 1.0)
    assert np.all(contacts[:, 2:] == 0.0)


def test_relative_to_global_tensor_matches_ndarray_path(skel22):
    glob = smooth_global_motion(skel22, frames=12, seed=8)
    rel = global_to_relative(glob, skel22)
    via_tensor = relative_to_global_tensor(ad.Tensor(rel.data), skel22.J).value
    via_api = relative_to_global(rel, skel22).positions
    np.testing.assert_allclose(via_tensor, via_api, atol=1e-12)


def test_relative_to_global_tensor_gradient(skel4):
    glob = smooth_global_motion(skel4, frames=6, seed=9)
    rel = global_to_relative(glob, skel4).data
    w = rng(10).standard_normal((6, skel4.J, 3))

    t = ad.Tensor(rel.copy(), requires_grad=True)
    ad.tsum(ad.mul(relative_to_global_tensor(t, skel4.J), w)).backward()

    fd = finite_difference(
        lambda v: float(
            ad.tsum(ad.mul(relative_to_global_tensor(ad.Tensor(v), skel4.J), w)).value
        ),
        rel,
    )
    assert relative_error(t.grad, fd) < 1e-5


def test_canonicalize_global_zeroes_start_and_heading(skel22):
    glob = smooth_global_motion(skel22, frames=20, seed=11)
    shifted = GlobalMotion(positions=glob.positions + np.array([5.0, 0.0, 7.0]),
                           fps=glob.fps)
    canon = canonicalize_global(shifted, skel22)
    assert abs(canon.positions[0, 0, 0]) < 1e-9
    assert abs(canon.positions[0, 0, 2]) < 1e-9
    # canonicalization is translation-invariant in the ground plane
    canon2 = canonicalize_global(glob, skel22)
    np.testing.assert_allclose(canon.positions, canon2.positions, atol=1e-9)


def test_validation_rejects_malformed_inputs():
    with pytest.raises(ValidationError):
        RelativeMotion(data=np.zeros((5, 10)))  # D=10 invalid
    with pytest.raises(ValidationError):
        RelativeMotion(data=np.full((5, 263), np.nan))
    with pytest.raises(ValidationError):
        GlobalMotion(positions=np.zeros((5, 22, 2)))
    with pytest.raises(ValidationError):
        GlobalMotion(positions=np.zeros((5, 22, 3)), fps=0.0)


def test_round_trip_holds_across_many_random_sequences(skel22):
    worst = 0.0
    for seed in range(20):
        glob = smooth_global_motion(skel22, frames=16, seed=100 + seed)
        rel = global_to_relative(glob, skel22)
        back = relative_to_global(rel, skel22)
        want = canonicalize_global(glob, skel22).positions
        worst = max(worst, float(np.max(np.abs(back.positions - want))))
    assert worst < 1e-6, worst
