import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apex_rl.dynamics import default_chain, forward_kinematics
from apex_rl.reference import (
    GAIT_ORDER, GAIT_PATTERNS, GaitConfigError, GaitSpec, SelectorRangeError, build_clip, gait_library,
    make_gait, max_reference_speed, parse_selector, phase, phase_features, sample_reference, selector_value,
)

CHAIN = default_chain(8)


def simple_gait(**kw):
    d = dict(name="g", frequency=1.5, amplitudes=[0.2, 0.1], phase_offsets=[0.0, 0.25], joint_offsets=[0.1, -0.2])
    d.update(kw)
    return GaitSpec(**d)


# --- selector ----------------------------------------------------------------------


@pytest.mark.parametrize("m,n,value", [(2, 4, 0.5), (0, 4, 0.0), (3, 4, 0.75), (1, 4, 0.25)])
def test_selector_values(m, n, value):
    assert selector_value(m, n).value == value


def test_selector_out_of_range():
    with pytest.raises(SelectorRangeError):
        selector_value(4, 4)
    with pytest.raises(SelectorRangeError):
        selector_value(-1, 4)
    with pytest.raises(SelectorRangeError):
        selector_value(0, 0)


@pytest.mark.parametrize("n", range(1, 17))
def test_selector_round_trip(n):
    for m in range(n):
        assert selector_value(m, n).value * n == m


def test_parse_selector():
    s = parse_selector("3/4")
    assert (s.m, s.n, s.value) == (3, 4, 0.75)
    with pytest.raises(SelectorRangeError):
        parse_selector("three")
    with pytest.raises(SelectorRangeError):
        parse_selector("5/4")


# --- sampling ----------------------------------------------------------------------


def test_reference_at_zero_is_offsets():
    g = simple_gait(phase_offsets=[0.0, 0.0])
    q, _, _ = sample_reference(g, 0.0, default_chain(2))
    assert np.array_equal(q, g.joint_offsets)


@settings(max_examples=100, deadline=None)
@given(t=st.floats(0, 50))
def test_reference_periodic(t):
    g = simple_gait()
    p = default_chain(2)
    a, _, _ = sample_reference(g, t, p)
    b, _, _ = sample_reference(g, t + 1 / g.frequency, p)
    assert np.max(np.abs(a - b)) < 1e-12


@settings(max_examples=100, deadline=None)
@given(t=st.floats(1e-3, 10))
def test_reference_rate_matches_finite_difference(t):
    g = simple_gait()
    p = default_chain(2)
    h = 1e-5
    qp, _, _ = sample_reference(g, t + h, p)
    qm, _, _ = sample_reference(g, t - h, p)
    _, qdot, _ = sample_reference(g, t, p)
    assert np.max(np.abs((qp - qm) / (2 * h) - qdot)) < 1e-6


def test_reference_tip_is_fk():
    g = make_gait("canter", 8, CHAIN)
    q, _, tip = sample_reference(g, 0.37, CHAIN)
    x, z = forward_kinematics(q, CHAIN)
    assert tip[0] == x and tip[1] == z


def test_reference_batched_matches_scalar():
    g = make_gait("trot", 8, CHAIN)
    ts = np.linspace(0, 2, 11)
    q, qd, tip = sample_reference(g, ts, CHAIN)
    for i, t in enumerate(ts):
        a, b, c = sample_reference(g, t, CHAIN)
        assert np.array_equal(q[i], a) and np.array_equal(qd[i], b) and np.array_equal(tip[i], c)


def test_reference_is_pure():
    g = make_gait("pace", 8, CHAIN)
    before = g.to_dict()
    a = sample_reference(g, 1.23, CHAIN)
    b = sample_reference(g, 1.23, CHAIN)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert g.to_dict() == before


# --- phase -------------------------------------------------------------------------


@pytest.mark.parametrize("t_periods,expected", [(0.0, 0.0), (1.0, 0.0), (0.5, 0.5), (3.0, 0.0), (2.25, 0.25)])
def test_phase_examples(t_periods, expected):
    for f in (0.7, 1.5, 3.0):
        g = simple_gait(frequency=f)
        assert phase(g, t_periods / f) == pytest.approx(expected, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(t=st.floats(0, 1e3))
def test_phase_in_unit_interval(t):
    p = phase(simple_gait(), t)
    assert 0.0 <= p < 1.0


def test_phase_features_continuous_across_wrap():
    g = simple_gait()
    before = phase_features(g, g.period - 1e-9)
    after = phase_features(g, g.period + 1e-9)
    assert np.max(np.abs(before - after)) < 1e-6


# --- library -----------------------------------------------------------------------


def test_library_patterns():
    lib = gait_library(8, CHAIN)
    assert [g.name for g in lib] == list(GAIT_ORDER)
    for g in lib:
        assert np.array_equal(g.phase_offsets[:4], GAIT_PATTERNS[g.name])
        assert np.array_equal(g.phase_offsets[4:], GAIT_PATTERNS[g.name])
    assert len({g.velocity_cmd for g in lib}) == 4


def test_pronk_all_in_phase():
    g = make_gait("pronk", 8, CHAIN)
    assert np.all(g.phase_offsets == g.phase_offsets[0])


def test_trot_diagonal_pairs_anti_phase():
    g = make_gait("trot", 8, CHAIN)
    off = g.phase_offsets
    assert off[0] == off[3] and off[1] == off[2]
    assert (off[1] - off[0]) % 1.0 == 0.5
    # groups 0 and 1 move exactly opposite (equal amplitude within a block)
    ts = np.linspace(0, g.period, 50)
    q, _, _ = sample_reference(g, ts, CHAIN)
    assert np.max(np.abs(q[:, 0] + q[:, 1])) < 1e-12


def test_library_clips_are_distinct():
    lib = gait_library(8, CHAIN)
    clips = [build_clip(g, CHAIN, lib[0].period, 0.005).q.ravel() for g in lib]
    for i in range(4):
        for j in range(i + 1, 4):
            assert np.corrcoef(clips[i], clips[j])[0, 1] < 0.99


def test_library_needs_four_joints():
    with pytest.raises(GaitConfigError):
        gait_library(3)
    with pytest.raises(GaitConfigError):
        make_gait("gallop", 8)


@pytest.mark.parametrize("name", GAIT_ORDER)
def test_reference_speed_bound(name):
    g = make_gait(name, 8, CHAIN)
    _, qdot, _ = sample_reference(g, np.linspace(0, 3, 2001), CHAIN)
    assert np.max(np.abs(qdot)) <= 2 * math.pi * g.frequency * np.max(np.abs(g.amplitudes)) + 1e-12
    assert max_reference_speed(g) == 2 * math.pi * g.frequency * np.max(np.abs(g.amplitudes))


def test_gaitspec_validation():
    with pytest.raises(GaitConfigError):
        simple_gait(frequency=0.0)
    with pytest.raises(GaitConfigError):
        simple_gait(phase_offsets=[0.0, 1.0])
    with pytest.raises(GaitConfigError):
        simple_gait(joint_offsets=[0.0])
    g = simple_gait()
    assert GaitSpec.from_dict(g.to_dict()).to_dict() == g.to_dict()


# --- clips -------------------------------------------------------------------------


@pytest.mark.parametrize("duration,dt,count", [(1.0, 0.02, 51), (0.0, 0.02, 1), (2.0 / 3.0, 0.02, 34), (0.1, 0.03, 4)])
def test_clip_length(duration, dt, count):
    clip = build_clip(make_gait("trot", 8, CHAIN), CHAIN, duration, dt)
    assert len(clip) == count == math.floor(round(duration / dt, 9)) + 1


def test_clip_rates_consistent_with_central_differences():
    dt = 0.02
    for f in (0.5, 1.5):
        g = make_gait("canter", 8, CHAIN, frequency=f)
        clip = build_clip(g, CHAIN, 2.0, dt)
        cd = (clip.q[2:] - clip.q[:-2]) / (2 * dt)
        err = np.max(np.abs(cd - clip.qdot[1:-1]))
        # central-difference truncation error of a sinusoid: A w^3 dt^2 / 6
        bound = np.max(np.abs(g.amplitudes)) * (2 * math.pi * f) ** 3 * dt**2 / 6
        assert err <= bound * (1 + 1e-6)
        if f == 0.5:
            assert err < 1e-3


def test_clip_csv(tmp_path):
    g = make_gait("pace", 8, CHAIN)
    clip = build_clip(g, CHAIN, 0.1, 0.02)
    path = tmp_path / "clip.csv"
    clip.to_csv(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t"] + [f"q_ref_{j}" for j in range(1, 9)] + [f"qdot_ref_{j}" for j in range(1, 9)] + ["tip_x", "tip_z"]
    assert len(rows) == 1 + len(clip)
    back = np.array(rows[1:], dtype=float)
    assert np.array_equal(back[:, 1:9], clip.q)
    assert np.array_equal(back[:, -2:], clip.tip)
