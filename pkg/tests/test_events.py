"""Event responses: geometric contracts of the six crowd patterns."""

from __future__ import annotations

import numpy as np
import pytest

from cmg.errors import ValidationError
from cmg.planner import CrowdParams, EventSpec, Group, ScenePlan, apply_event
from cmg.planner.events import interpret_event

FPS = 20.0
V_STEP = 1.5 / FPS  # default speed clamp per frame


def make_plan(positions, frames=100, joints=2, seed=0):
    """Stationary agents standing at given ground-plane positions."""
    n = len(positions)
    control = np.zeros((n, frames, joints, 3))
    mask = np.zeros((n, frames, joints))
    for i, (x, z) in enumerate(positions):
        control[i, :, 0] = (x, 0.9, z)
        mask[i, :, 0] = 1.0
    params = CrowdParams(n=n, s=n, sigma=0.5, alpha=0.0)
    groups = [Group(id=0, members=list(range(n)),
                    activity_text="stand and converse", anchor=[0.0, 0.0])]
    return ScenePlan(params=params, groups=groups, control=control, mask=mask,
                     fps=FPS, frames=frames, provenance={"seed": seed})


def paths_xz(plan):
    return plan.control[:, :, 0, :][:, :, [0, 2]]


# ----------------------------------------------------------------- Queuing


def test_queuing_final_gaps_equal_spacing():
    plan = make_plan([(1.3, 0.4), (-0.9, -0.2), (2.6, 0.1), (0.2, -1.0)])
    event = EventSpec(pattern="Queuing", epicenter=[0.0, 0.0], onset_frame=0,
                      duration_frames=20, direction=[1.0, 0.0], spacing=0.8)
    out = apply_event(plan, "line up", event=event)
    final = paths_xz(out)[:, -1, :]
    order = np.argsort(final[:, 0])
    line = final[order]
    assert np.allclose(line[:, 1], 0.0, atol=1e-9)
    gaps = np.diff(line[:, 0])
    assert np.allclose(gaps, 0.8, atol=1e-9)
    assert np.allclose(line[0], [0.0, 0.0], atol=1e-9)


def test_queuing_assignment_preserves_order():
    """Sorted-projection assignment: front agent stays in front."""
    plan = make_plan([(0.5, 0.0), (2.0, 0.0), (4.0, 0.0)])
    event = EventSpec(pattern="Queuing", epicenter=[0.0, 0.0], onset_frame=0,
                      duration_frames=10, direction=[1.0, 0.0])
    out = apply_event(plan, "queue", event=event)
    final_x = paths_xz(out)[:, -1, 0]
    assert final_x[0] < final_x[1] < final_x[2]


# -------------------------------------------------------------- Encircling


def test_encircling_ring_radius_and_angles():
    plan = make_plan([(0.6, 0.2), (-0.8, 0.5), (0.1, -0.9), (1.2, 1.1)],
                     frames=150)
    event = EventSpec(pattern="Encircling", epicenter=[0.0, 0.0], onset_frame=0,
                      duration_frames=30, radius=2.0)
    out = apply_event(plan, "gather around", event=event)
    final = paths_xz(out)[:, -1, :]
    dist = np.hypot(final[:, 0], final[:, 1])
    assert np.allclose(dist, 2.0, atol=1e-9)
    angles = np.sort(np.mod(np.arctan2(final[:, 1], final[:, 0]), 2 * np.pi))
    want = np.sort(np.mod(2 * np.pi * np.arange(4) / 4, 2 * np.pi))
    assert np.allclose(angles, want, atol=1e-9)


# ---------------------------------------------------------------- Avoiding


def _obstacle_event(pattern):
    # obstacle sweeps the x-axis from (-3, 0) at 3 m/s for 2 seconds
    return EventSpec(pattern=pattern, epicenter=[-3.0, 0.0], onset_frame=10,
                     duration_frames=40, direction=[3.0, 0.0], radius=1.5)


def test_avoiding_reaches_clearance_and_stays_out():
    plan = make_plan([(0.0, 0.0), (10.0, 10.0)])
    out = apply_event(plan, "avoid the cart", event=_obstacle_event("Avoiding"))
    moved = paths_xz(out)[0]
    a, b = np.array([-3.0, 0.0]), np.array([3.0, 0.0])

    def seg_dist(p):
        u = np.clip(((p - a) @ (b - a)) / ((b - a) @ (b - a)), 0.0, 1.0)
        return float(np.hypot(*(p - a - u * (b - a))))

    late = [seg_dist(moved[t]) for t in range(80, 100)]
    assert min(late) >= 1.5 - 1e-9
    # distant bystander is untouched
    assert np.array_equal(out.control[1], plan.control[1])
    # and everything before onset is untouched
    assert np.array_equal(out.control[:, :10], plan.control[:, :10])


# ----------------------------------------------------------------- Passing


def test_passing_displaces_then_returns():
    plan = make_plan([(0.0, 0.0)])
    out = apply_event(plan, "let it pass", event=_obstacle_event("Passing"))
    moved = paths_xz(out)[0]
    orig = paths_xz(plan)[0]
    mid = 30  # onset 10 + half the 40-frame window
    assert np.hypot(*(moved[mid] - orig[mid])) > 1.0
    assert np.hypot(*(moved[-1] - orig[-1])) <= 0.1


# --------------------------------------------------------------- Following


def test_following_staggered_column_behind_leader():
    frames = 140
    plan = make_plan([(0.0, 0.0), (0.0, 0.6)], frames=frames)
    # leader walks +x at 1 m/s
    t = np.arange(frames)
    plan.control[0, :, 0, 0] = 0.05 * t
    event = EventSpec(pattern="Following", epicenter=[0.0, 0.0], onset_frame=0,
                      duration_frames=40, leader_agent=0)
    out = apply_event(plan, "follow the leader", event=event)
    lead = paths_xz(out)[0]
    follower = paths_xz(out)[1]
    assert np.array_equal(lead, paths_xz(plan)[0])  # leader keeps its path
    delay = int(round(0.5 * FPS))  # rank-1 lag in frames
    for fr in range(delay, frames):
        want = paths_xz(plan)[0][fr - delay] + np.array([0.0, 0.6])
        assert np.allclose(follower[fr], want, atol=1e-9)


def test_following_rejects_bad_leader():
    plan = make_plan([(0.0, 0.0), (1.0, 0.0)])
    event = EventSpec(pattern="Following", epicenter=[0.0, 0.0], onset_frame=0,
                      duration_frames=10, leader_agent=5)
    with pytest.raises(ValidationError):
        apply_event(plan, "follow", event=event)


# ------------------------------------------------------------------ Random


def test_random_waypoints_within_disk_and_deterministic():
    plan = make_plan([(0.0, 0.0), (4.0, -2.0), (-3.0, 1.0)], frames=80, seed=5)
    event = EventSpec(pattern="Random", epicenter=[0.0, 0.0], onset_frame=5,
                      duration_frames=10)
    out1 = apply_event(plan, "scatter", event=event)
    out2 = apply_event(plan, "scatter", event=event)
    assert np.array_equal(out1.control, out2.control)
    onset_pos = paths_xz(plan)[:, 5, :]
    final = paths_xz(out1)[:, -1, :]
    assert np.all(np.hypot(*(final - onset_pos).T) <= 3.0 + 1e-9)
    assert not np.allclose(final, onset_pos)  # they did move

    other_seed = make_plan([(0.0, 0.0), (4.0, -2.0), (-3.0, 1.0)],
                           frames=80, seed=6)
    out3 = apply_event(other_seed, "scatter", event=event)
    assert not np.array_equal(out1.control, out3.control)


# ------------------------------------------------------------ shared rules


def test_speed_clamp_holds_for_every_pattern():
    starts = [(1.3, 0.4), (-0.9, -0.2), (2.6, 0.1), (0.2, -1.0)]
    events = [
        EventSpec(pattern="Queuing", epicenter=[0, 0], onset_frame=3,
                  duration_frames=10, direction=[1.0, 0.0]),
        EventSpec(pattern="Encircling", epicenter=[0, 0], onset_frame=3,
                  duration_frames=10, radius=2.0),
        _obstacle_event("Avoiding"),
        _obstacle_event("Passing"),
        EventSpec(pattern="Following", epicenter=[0, 0], onset_frame=3,
                  duration_frames=10, leader_agent=0),
        EventSpec(pattern="Random", epicenter=[0, 0], onset_frame=3,
                  duration_frames=10),
    ]
    for event in events:
        out = apply_event(make_plan(starts), "event", event=event)
        steps = np.linalg.norm(np.diff(paths_xz(out), axis=1), axis=-1)
        assert np.all(steps <= V_STEP + 1e-9), event.pattern


def test_input_plan_is_not_modified():
    plan = make_plan([(1.0, 0.0), (2.0, 0.0)])
    before = plan.control.copy()
    event = EventSpec(pattern="Queuing", epicenter=[0, 0], onset_frame=0,
                      duration_frames=10, direction=[1.0, 0.0])
    apply_event(plan, "queue", event=event)
    assert np.array_equal(plan.control, before)


def test_moved_agents_drop_future_joint_constraints():
    plan = make_plan([(0.0, 0.0), (1.3, 0.0)], joints=3)
    for agent in (0, 1):
        plan.control[agent, 30, 1] = (0.5, 1.0, 0.0)
        plan.mask[agent, 30, 1] = 1.0
        plan.control[agent, 2, 2] = (0.1, 1.0, 0.0)
        plan.mask[agent, 2, 2] = 1.0
    event = EventSpec(pattern="Queuing", epicenter=[0.0, 0.0], onset_frame=5,
                      duration_frames=10, direction=[1.0, 0.0])
    out = apply_event(plan, "queue", event=event)
    # agent 0 already stands on slot 0: untouched, keeps both constraints
    assert out.mask[0, 30, 1] == 1.0
    # agent 1 must walk to its slot: future wrist constraint dropped ...
    assert out.mask[1, 30, 1] == 0.0
    assert np.all(out.control[1, 30, 1] == 0.0)
    # ... but the pre-onset one survives
    assert out.mask[1, 2, 2] == 1.0


def test_event_provenance_recorded():
    plan = make_plan([(1.0, 0.0)])
    event = EventSpec(pattern="Random", epicenter=[0, 0], onset_frame=0,
                      duration_frames=5)
    out = apply_event(plan, "something startling happens", event=event)
    assert out.provenance["events"][0]["pattern"] == "Random"
    assert out.provenance["events"][0]["text"] == "something startling happens"


def test_onset_beyond_sequence_rejected():
    plan = make_plan([(1.0, 0.0)], frames=20)
    event = EventSpec(pattern="Random", epicenter=[0, 0], onset_frame=25,
                      duration_frames=5)
    with pytest.raises(ValidationError):
        apply_event(plan, "late", event=event)


# ----------------------------------------------------- spec and interpreter


def test_unknown_pattern_lists_all_six():
    with pytest.raises(ValidationError) as err:
        EventSpec(pattern="Stampeding", epicenter=[0, 0], onset_frame=0,
                  duration_frames=1)
    msg = str(err.value)
    for name in ("Following", "Avoiding", "Queuing", "Encircling", "Passing",
                 "Random"):
        assert name in msg


def test_event_spec_requirements():
    with pytest.raises(ValidationError):  # Avoiding needs radius
        EventSpec(pattern="Avoiding", epicenter=[0, 0], onset_frame=0,
                  duration_frames=1, direction=[1.0, 0.0])
    with pytest.raises(ValidationError):  # Following needs a leader
        EventSpec(pattern="Following", epicenter=[0, 0], onset_frame=0,
                  duration_frames=1)
    with pytest.raises(ValidationError):  # Queuing needs a usable axis
        EventSpec(pattern="Queuing", epicenter=[0, 0], onset_frame=0,
                  duration_frames=1, direction=[0.0, 0.0])
    with pytest.raises(ValidationError):  # negative onset
        EventSpec(pattern="Random", epicenter=[0, 0], onset_frame=-1,
                  duration_frames=1)


@pytest.mark.parametrize(
    "text,pattern",
    [
        ("everyone dodge the oncoming car", "Avoiding"),
        ("form a queue at the ticket booth", "Queuing"),
        ("gather around the performer", "Encircling"),
        ("follow the tour guide", "Following"),
        ("let the runners pass through", "Passing"),
        ("confetti rains from the sky", "Random"),
    ],
)
def test_interpret_event_keywords(text, pattern):
    plan = make_plan([(0.0, 0.0), (2.0, 2.0)])
    event = interpret_event(text, plan)
    assert event.pattern == pattern


def test_interpret_event_defaults():
    plan = make_plan([(0.0, 0.0), (2.0, 2.0)], frames=80)
    event = interpret_event("something happens", plan)
    assert event.onset_frame == 20
    assert event.duration_frames == 40
    assert np.allclose(event.epicenter, [1.0, 1.0])


def test_event_spec_dict_round_trip():
    event = EventSpec(pattern="Avoiding", epicenter=[1.0, -2.0], onset_frame=7,
                      duration_frames=31, direction=[0.5, 0.5], radius=2.5)
    back = EventSpec.from_dict(event.to_dict())
    assert back.to_dict() == event.to_dict()
