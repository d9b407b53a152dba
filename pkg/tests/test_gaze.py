from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaitemotion.gaze import (
    GazeAngles,
    GazeConfig,
    GazeContext,
    apply_gaze,
    clamp_gaze,
    gaze_target,
    neutral_gaze,
    raw_gaze_target,
    smooth_gaze,
)
from gaitemotion.gea import EMOTIONS, Emotion
from gaitemotion.simulator import gaze_targets
from gaitemotion.skeleton import JointId, load_gait

from . import oracles

CFG = GazeConfig()
DEG = math.pi / 180.0


def _ctx(agent, user, facing=(0.0, 1.0)):
    return GazeContext(tuple(agent), tuple(user), tuple(facing))


def test_config_defaults_and_degrees():
    assert CFG.to_degrees() == pytest.approx(
        {"theta_happy": -5.0, "theta_sad": 10.0, "max_rot": 70.0, "max_flex": 45.0, "max_ext": 45.0, "rate": 90.0}
    )
    assert GazeConfig.from_degrees(max_rot=30).max_rot == pytest.approx(30 * DEG)
    with pytest.raises(ValueError):
        GazeConfig(rate=0.0)


def test_angry_level_user():
    g = gaze_target(Emotion.Angry, _ctx((0, 1.6, 0), (0, 1.6, 3)))
    assert g.flex == 0.0 and g.rot == 0.0


def test_angry_thirty_degrees():
    g = gaze_target(Emotion.Angry, _ctx((0, 2.7, 0), (0, 1.7, 2)))
    assert g.flex == pytest.approx(30 * DEG, abs=1e-12)


def test_happy_user_ahead():
    g = gaze_target(Emotion.Happy, _ctx((1, 1.6, 1), (1, 1.7, 5)))
    assert g.rot == 0.0
    assert g.flex == pytest.approx(-5 * DEG, abs=1e-15)


@pytest.mark.parametrize("user", [(0, 0, 5), (3, 9, -2), (-4, 1, 0)])
def test_sad_ignores_context(user):
    g = gaze_target(Emotion.Sad, _ctx((0, 1.6, 0), user, (0.3, -0.7)))
    assert (g.flex, g.rot) == (pytest.approx(10 * DEG), 0.0)


def test_angry_user_on_the_left_is_clamped():
    # facing +z, left is +x
    raw = raw_gaze_target(Emotion.Angry, _ctx((0, 1.6, 0), (2, 1.6, 0)), GazeAngles(), CFG)
    assert raw.rot == pytest.approx(90 * DEG, abs=1e-12)
    assert gaze_target(Emotion.Angry, _ctx((0, 1.6, 0), (2, 1.6, 0))).rot == pytest.approx(70 * DEG, abs=1e-12)


def test_neutral_passes_through_and_clamps():
    assert gaze_target(Emotion.Neutral, _ctx((0, 0, 0), (1, 0, 0)), GazeAngles(0.1, -0.2)) == GazeAngles(0.1, -0.2)
    big = gaze_target(Emotion.Neutral, _ctx((0, 0, 0), (1, 0, 0)), GazeAngles(2.0, -3.0))
    assert (big.flex, big.rot) == (CFG.max_flex, -CFG.max_rot)


def test_coincident_user_is_flagged():
    for e in (Emotion.Happy, Emotion.Angry):
        g = gaze_target(e, _ctx((1, 1.6, 2), (1, 0.5, 2)))
        assert (g.flex, g.rot, g.flagged) == (0.0, 0.0, True)


def test_clamp_boundary_is_inclusive():
    exact = GazeAngles(CFG.max_flex, -CFG.max_rot)
    assert clamp_gaze(exact, CFG) == exact
    over = GazeAngles(math.nextafter(CFG.max_flex, 10), math.nextafter(-CFG.max_rot, -10))
    assert clamp_gaze(over, CFG) == exact
    under = GazeAngles(-CFG.max_ext - 1e-3, 0.0)
    assert clamp_gaze(under, CFG).flex == -CFG.max_ext


def test_arcsin_argument_clamped():
    g = raw_gaze_target(Emotion.Angry, _ctx((0, 10, 0), (0.1, 0, 0)), GazeAngles(), CFG)
    assert g.flex == pytest.approx(math.pi / 2)
    assert gaze_target(Emotion.Angry, _ctx((0, -10, 0), (0.1, 0, 0))).flex == -CFG.max_ext


def random_contexts(n, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        agent = rng.uniform(-10, 10, 3)
        agent[1] = rng.uniform(1.0, 2.0)
        user = rng.uniform(-10, 10, 3)
        user[1] = rng.uniform(0.5, 2.5)
        h = rng.uniform(-math.pi, math.pi)
        out.append((agent, user, np.array([math.sin(h), math.cos(h)])))
    return out


def test_formulas_against_direct_evaluation():
    loose = GazeConfig(max_rot=math.pi, max_flex=math.pi / 2, max_ext=math.pi / 2)
    for agent, user, facing in random_contexts(1000):
        ctx = _ctx(agent, user, facing)
        want_rot = oracles.rot_to_user(agent, user, facing)
        happy = gaze_target(Emotion.Happy, ctx, cfg=loose)
        angry = gaze_target(Emotion.Angry, ctx, cfg=loose)
        sad = gaze_target(Emotion.Sad, ctx, cfg=loose)
        assert abs(happy.rot - want_rot) <= 1e-12
        assert happy.flex == loose.theta_happy
        assert abs(angry.rot - want_rot) <= 1e-12
        assert abs(angry.flex - oracles.angry_flex(agent, user)) <= 1e-12
        assert (sad.flex, sad.rot) == (loose.theta_sad, 0.0)


def test_vectorized_targets_match_scalar():
    ctxs = random_contexts(200, seed=1)
    emotions = np.array([int(EMOTIONS[k % 4]) for k in range(200)])
    neck = np.array([c[0] for c in ctxs])
    facing = np.array([c[2] for c in ctxs])
    user = ctxs[0][1]
    nf, nr = np.linspace(-0.5, 0.5, 200), np.linspace(1.5, -1.5, 200)
    flex, rot, _ = gaze_targets(emotions, neck, user, facing, nf, nr, CFG)
    for k in range(200):
        g = gaze_target(EMOTIONS[emotions[k]], _ctx(neck[k], user, facing[k]), GazeAngles(nf[k], nr[k]), CFG)
        assert abs(flex[k] - g.flex) <= 1e-12 and abs(rot[k] - g.rot) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(-20, 20), st.floats(0, 3), st.floats(-20, 20), st.floats(0, 3))
def test_rot_antisymmetry_exact(ux, uy, uz, ay):
    # agent on the z axis facing +z; mirroring across x = 0 negates rot exactly
    a = (0.0, ay, 0.0)
    if ux == 0.0 and uz <= 0.0:
        return  # coincident, or directly behind on the +-pi branch cut
    for e in (Emotion.Happy, Emotion.Angry):
        left = raw_gaze_target(e, _ctx(a, (ux, uy, uz)), GazeAngles(), CFG)
        right = raw_gaze_target(e, _ctx(a, (-ux, uy, uz)), GazeAngles(), CFG)
        assert left.rot == -right.rot
        assert left.flex == right.flex


def test_rot_antisymmetry_any_facing():
    for agent, user, facing in random_contexts(300, seed=4):
        f = np.array([facing[0], 0.0, facing[1]])
        d = user - agent
        left = np.cross([0.0, 1.0, 0.0], f)
        mirrored = agent + d - 2.0 * np.dot(d, left) * left
        a = raw_gaze_target(Emotion.Happy, _ctx(agent, user, facing), GazeAngles(), CFG)
        b = raw_gaze_target(Emotion.Happy, _ctx(agent, mirrored, facing), GazeAngles(), CFG)
        assert abs(a.rot + b.rot) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50), st.floats(-5, 5), st.floats(-50, 50), st.floats(-60, 60))
def test_flex_always_finite_and_limited(ux, uy, uz, ay):
    g = gaze_target(Emotion.Angry, _ctx((0.3, ay, -0.2), (ux, uy, uz), (1.0, 0.0)))
    assert math.isfinite(g.flex) and -CFG.max_ext <= g.flex <= CFG.max_flex
    assert -CFG.max_rot <= g.rot <= CFG.max_rot


def test_facing_must_be_nonzero():
    with pytest.raises(ValueError):
        _ctx((0, 0, 0), (1, 0, 0), (0.0, 0.0))


# --------------------------------------------------------------------------
# smoothing


def test_smoothing_examples():
    g = GazeAngles(0.2, -0.1)
    assert smooth_gaze(g, g, 0.1) == g
    out = smooth_gaze(GazeAngles(0.0, 0.0), GazeAngles(0.0, math.pi), 0.1)
    assert out.rot == pytest.approx(9 * DEG, abs=1e-15)
    with pytest.raises(ValueError):
        smooth_gaze(g, g, 0.0)


def test_smoothing_converges_in_gap_over_rate():
    cur, target, dt = GazeAngles(0.0, 0.0), GazeAngles(0.4, -1.1), 1 / 60
    limit = max(0.4, 1.1) / CFG.rate
    steps = 0
    while cur != target:
        cur = smooth_gaze(cur, target, dt)
        steps += 1
        assert steps <= 10_000
    assert steps * dt <= limit + dt


@settings(max_examples=300, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(1e-4, 0.5))
def test_smoothing_never_overshoots(cf, cr, tf, tr, dt):
    out = smooth_gaze(GazeAngles(cf, cr), GazeAngles(tf, tr), dt)
    step = CFG.rate * dt
    assert abs(out.flex - tf) <= max(0.0, abs(cf - tf) - step) + 1e-15
    assert abs(out.rot - tr) <= max(0.0, abs(cr - tr) - step) + 1e-15


# --------------------------------------------------------------------------
# pose


def _pose(fixtures_dir):
    return np.array(load_gait(fixtures_dir / "tpose.json").frames[0])


def test_zero_gaze_is_identity(fixtures_dir):
    p = _pose(fixtures_dir)
    assert np.array_equal(apply_gaze(p, GazeAngles(0.0, 0.0)), p)


def test_flex_ninety_on_vertical_segment(fixtures_dir):
    p = _pose(fixtures_dir)
    p[JointId.Head] = p[JointId.Neck] + [0.0, 0.25, 0.0]
    out = apply_gaze(p, GazeAngles(math.pi / 2, 0.0))
    seg = out[JointId.Head] - out[JointId.Neck]
    # the body faces +z (left is +x), bowing forward puts the head at +z
    np.testing.assert_allclose(seg, [0.0, 0.0, 0.25], atol=1e-9)
    others = [j for j in range(16) if j != JointId.Head]
    assert np.array_equal(out[others], p[others])


def test_rot_turns_head_left(fixtures_dir):
    p = _pose(fixtures_dir)
    p[JointId.Head] = p[JointId.Neck] + [0.0, 0.0, 0.2]
    out = apply_gaze(p, GazeAngles(0.0, math.pi / 2))
    np.testing.assert_allclose(out[JointId.Head] - out[JointId.Neck], [0.2, 0.0, 0.0], atol=1e-12)


def test_zero_length_segment_unchanged(fixtures_dir):
    p = _pose(fixtures_dir)
    p[JointId.Head] = p[JointId.Neck]
    assert np.array_equal(apply_gaze(p, GazeAngles(0.3, 0.4)), p)


def test_apply_gaze_isometry(fixtures_dir):
    base = _pose(fixtures_dir)
    rng = np.random.default_rng(5)
    for _ in range(500):
        p = base + rng.normal(scale=0.05, size=base.shape)
        angles = GazeAngles(rng.uniform(-1.5, 1.5), rng.uniform(-3, 3))
        out = apply_gaze(p, angles)
        before = np.linalg.norm(p[JointId.Head] - p[JointId.Neck])
        after = np.linalg.norm(out[JointId.Head] - out[JointId.Neck])
        assert abs(before - after) <= 1e-9


def test_neutral_gaze_of_upright_head(fixtures_dir):
    p = _pose(fixtures_dir)
    p[JointId.Head] = p[JointId.Neck] + [0.0, 0.2, 0.0]
    g = neutral_gaze(p, (0.0, 1.0))
    assert g.flex == pytest.approx(0.0) and g.rot == 0.0
    p[JointId.Head] = p[JointId.Neck] + [0.0, 0.2, 0.2]
    assert neutral_gaze(p, (0.0, 1.0)).flex == pytest.approx(math.pi / 4)


def test_neutral_gaze_round_trips_through_apply(fixtures_dir):
    p = _pose(fixtures_dir)
    p[JointId.Head] = p[JointId.Neck] + [0.0, 0.2, 0.0]
    target = GazeAngles(0.3, 0.5)
    out = apply_gaze(p, target)
    g = neutral_gaze(out, (0.0, 1.0))
    # flex is measured in the facing plane, so a yawed bow reads shallower
    assert g.flex == pytest.approx(math.atan(math.tan(0.3) * math.cos(0.5)), abs=1e-12)
    assert g.rot == pytest.approx(0.5, abs=1e-12)
