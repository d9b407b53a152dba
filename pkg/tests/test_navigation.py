from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaitemotion.navigation import (
    DEFAULT_MAX_SPEED,
    DEFAULT_RADIUS,
    DEFAULT_TIME_HORIZON,
    NavAgent,
    NavWorld,
    _lp2,
    _lp3,
    compute_new_velocity,
    compute_velocities,
    goal_velocities,
    goal_velocity,
    min_separation,
    preferred_speed,
    step,
)
from gaitemotion.skeleton import Gait, JointId

from . import oracles


def root_gait(displacement, n_frames, fps):
    f = np.zeros((n_frames, 16, 3))
    f[:, :, 1] = 1.0
    s = np.linspace(0.0, 1.0, n_frames)
    f[:, :, 0] += np.outer(s, [1.0] * 16) * displacement[0]
    f[:, :, 2] += np.outer(s, [1.0] * 16) * displacement[1]
    return Gait("root", fps, f)


def test_preferred_speed_examples():
    assert preferred_speed(root_gait((0.0, 0.0), 30, 30)) == 0.0
    assert abs(preferred_speed(root_gait((0.0, 1.2), 60, 60)) - 1.2) <= 1e-12
    assert abs(preferred_speed(root_gait((0.6, 0.8), 100, 50)) - 0.5) <= 1e-12


def test_preferred_speed_ignores_vertical():
    g = root_gait((0.0, 1.2), 60, 60)
    f = np.array(g.frames)
    f[:, JointId.Root, 1] += np.linspace(0, 0.5, 60)
    assert abs(preferred_speed(Gait("g", 60, f)) - 1.2) <= 1e-12


def test_no_neighbors_returns_preferred():
    a = NavAgent("a", (0, 0), preferred_velocity=(1.1, -0.4))
    assert np.array_equal(compute_new_velocity(a, [], 0.1), [1.1, -0.4])


def test_far_neighbor_ignored():
    a = NavAgent("a", (0, 0), velocity=(1, 0), preferred_velocity=(1.0, 0.3))
    reach = (2 * DEFAULT_MAX_SPEED) * DEFAULT_TIME_HORIZON + 2 * DEFAULT_RADIUS
    b = NavAgent("b", (reach + 0.1, 0), velocity=(-1, 0), preferred_velocity=(-1, 0))
    assert np.array_equal(compute_new_velocity(a, [b], 0.1), [1.0, 0.3])


def _head_on(bias=None):
    # 3 m apart the closest way out of the obstacle is a sidestep; at 4 m
    # slowing down costs exactly as much and the optimum is not unique
    a = NavAgent("a", (-1.5, 0.0), velocity=(1.0, 0.0), preferred_velocity=(1.0, 0.0))
    b = NavAgent("b", (1.5, 0.0), velocity=(-1.0, 0.0), preferred_velocity=(-1.0, 0.0))
    kw = {} if bias is None else {"bias": bias}
    return a, b, compute_new_velocity(a, [b], 0.1, **kw), compute_new_velocity(b, [a], 0.1, **kw)


def test_head_on_is_mirror_symmetric():
    a, b, va, vb = _head_on()
    np.testing.assert_allclose(va, -vb, atol=1e-12)
    rel = (b.position[0] - a.position[0], b.position[1] - a.position[1])
    assert not oracles.collides(rel, tuple(vb - va), 2 * DEFAULT_RADIUS, DEFAULT_TIME_HORIZON)


def test_head_on_matches_sampling_oracle():
    # without the symmetry bias the half-plane optimum is the closest
    # collision-free reciprocal velocity, so a dense search must agree
    a, b, va, _ = _head_on(bias=0.0)
    combined = 2 * DEFAULT_RADIUS + 0.01
    g = np.linspace(-2.0, 2.0, 1601)
    best, best_d = None, math.inf
    for vx in g:
        for vy in g[np.abs(g) <= 1.2]:
            if vx * vx + vy * vy > 4.0:
                continue
            d = (vx - 1.0) ** 2 + vy**2
            if d >= best_d:
                continue
            # reciprocal: the mirrored agent takes the mirrored velocity
            if not oracles.collides((3.0, 0.0), (-2 * vx, -2 * vy), combined, DEFAULT_TIME_HORIZON):
                best, best_d = (vx, vy), d
    deviation = math.hypot(va[0] - 1.0, va[1])
    assert abs(deviation - math.sqrt(best_d)) <= 0.005
    assert abs(abs(va[1]) - abs(best[1])) <= 0.005


def test_head_on_forward_simulation_stays_apart():
    world = NavWorld(
        (
            NavAgent("a", (-3.0, 0.0), preferred_velocity=(1.0, 0.0)),
            NavAgent("b", (3.0, 0.0), preferred_velocity=(-1.0, 0.0)),
        ),
        dt=0.05,
    )
    for _ in range(200):
        world = step(world)
        pa, pb = (np.array(x.position) for x in world.agents)
        assert np.linalg.norm(pa - pb) >= 2 * DEFAULT_RADIUS - 1e-6


def test_single_agent_step():
    w = step(NavWorld((NavAgent("a", (0, 0), preferred_velocity=(1, 0)),), dt=0.1))
    assert w.agents[0].position == pytest.approx((0.1, 0.0), abs=1e-15)


def test_speed_is_capped():
    a = NavAgent("a", (0, 0), preferred_velocity=(5.0, 5.0), max_speed=1.5)
    assert np.linalg.norm(compute_new_velocity(a, [], 0.1)) <= 1.5 + 1e-9


def test_overlap_is_flagged_and_separates():
    a = NavAgent("a", (0.0, 0.0))
    b = NavAgent("b", (0.3, 0.0))
    va, flag_a = compute_new_velocity(a, [b], 0.1, return_flag=True)
    vb, _ = compute_new_velocity(b, [a], 0.1, return_flag=True)
    assert va[0] < 0 < vb[0]
    assert isinstance(flag_a, bool)


def _circle(n, r, dt=0.05):
    agents = []
    for k in range(n):
        t = 2 * math.pi * k / n
        agents.append(NavAgent(f"a{k}", (r * math.cos(t), r * math.sin(t))))
    return NavWorld(tuple(agents), dt)


def _run_to_goals(world, goals, steps, speed=1.3):
    ids = [a.id for a in world.agents]
    radius = np.array([a.radius for a in world.agents])
    worst = math.inf
    for _ in range(steps):
        pos = np.array([a.position for a in world.agents])
        pref, _ = goal_velocities(pos, goals, np.full(len(ids), speed), radius)
        world = NavWorld(
            tuple(NavAgent(a.id, a.position, a.velocity, a.radius, tuple(p)) for a, p in zip(world.agents, pref)),
            world.dt,
        )
        world = step(world)
        pos = np.array([a.position for a in world.agents])
        worst = min(worst, min_separation(pos, radius))
    return world, worst


def test_antipodal_circle_is_collision_free():
    world = _circle(8, 5.0)
    goals = -np.array([a.position for a in world.agents])
    world, worst = _run_to_goals(world, goals, int(30 / 0.05))
    assert worst >= -1e-6
    final = np.array([a.position for a in world.agents])
    assert np.all(np.linalg.norm(final - goals, axis=1) <= 2 * DEFAULT_RADIUS + 1e-9)


def test_storage_order_does_not_matter():
    world = _circle(6, 2.0)
    agents = [NavAgent(a.id, a.position, preferred_velocity=tuple(-0.5 * np.array(a.position))) for a in world.agents]
    w1 = NavWorld(tuple(agents), 0.1)
    w2 = NavWorld(tuple(reversed(agents)), 0.1)
    for _ in range(20):
        w1, w2 = step(w1), step(w2)
    assert w1.by_id() == w2.by_id()


@settings(max_examples=30, deadline=None)
@given(
    st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3), st.floats(-2, 2), st.floats(-2, 2)), min_size=2, max_size=8),
)
def test_speed_invariant(rows):
    pos = np.array([[r[0], r[1]] for r in rows])
    pref = np.array([[r[2], r[3]] for r in rows])
    n = len(rows)
    vel, _ = compute_velocities(pos, np.zeros((n, 2)), np.full(n, 0.3), pref, np.full(n, 1.5), np.full(n, 2.0), 0.1)
    assert np.all(np.linalg.norm(vel, axis=1) <= 1.5 + 1e-9)
    assert np.all(np.isfinite(vel))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, math.pi), st.floats(0.3, 2.0), st.floats(-3, 3), st.floats(0.05, 0.2))
def test_lone_agent_is_straight(heading, speed, offset, dt):
    start = np.array([offset, -offset])
    goal = start + 100.0 * np.array([math.cos(heading), math.sin(heading)])
    world = NavWorld((NavAgent("solo", tuple(start)),), dt)
    d = (goal - start) / np.linalg.norm(goal - start)
    for _ in range(40):
        a = world.agents[0]
        pref = goal_velocity(a.position, goal, speed, a.radius)
        world = step(NavWorld((NavAgent("solo", a.position, a.velocity, preferred_velocity=tuple(pref)),), dt))
        p = np.array(world.agents[0].position) - start
        assert abs(p[0] * d[1] - p[1] * d[0]) <= 1e-9
        assert abs(np.linalg.norm(world.agents[0].velocity) - speed) <= 1e-9


def test_goal_velocity_rules():
    assert np.array_equal(goal_velocity((0, 0), (0.5, 0), 1.0, 0.3), [0.0, 0.0])
    np.testing.assert_allclose(goal_velocity((0, 0), (3, 4), 1.0, 0.3), [0.6, 0.8], atol=1e-15)
    pref, arrived = goal_velocities(np.array([[0.0, 0.0], [0.0, 0.0]]), np.array([[0.5, 0.0], [3.0, 4.0]]), np.array([1.0, 1.0]), np.array([0.3, 0.3]))
    assert list(arrived) == [True, False]


def test_min_separation():
    pos = np.array([[0.0, 0.0], [1.0, 0.0], [5.0, 5.0]])
    assert min_separation(pos, np.array([0.3, 0.3, 0.3])) == pytest.approx(0.4)


def _random_lines(rng, n):
    lines = np.empty((n, 4))
    for k in range(n):
        ang = rng.uniform(0, 2 * math.pi)
        d = np.array([math.cos(ang), math.sin(ang)])
        # the origin is inside every half-plane here, so the program is feasible
        normal = np.array([-d[1], d[0]])
        point = -rng.uniform(0.05, 1.0) * normal
        lines[k] = [point[0], point[1], d[0], d[1]]
    return lines


@pytest.mark.parametrize("seed", range(8))
def test_linear_program_matches_grid_search(seed):
    rng = np.random.default_rng(seed)
    lines = _random_lines(rng, int(rng.integers(1, 6)))
    pref = rng.uniform(-2.5, 2.5, size=2)
    fail, x, y = _lp2(lines, len(lines), 2.0, pref[0], pref[1], False)
    assert fail == len(lines)
    ref = oracles.qp_by_sampling([((l[0], l[1]), (l[2], l[3])) for l in lines], pref, 2.0, n=1201)
    grid = 4.0 / 1200
    assert abs(math.hypot(x - pref[0], y - pref[1]) - np.linalg.norm(ref - pref)) <= 2 * grid


def test_infeasible_program_minimizes_violation():
    # two opposing half-planes with a gap: y >= 0.5 and y <= -0.5
    lines = np.array([[0.0, 0.5, 1.0, 0.0], [0.0, -0.5, -1.0, 0.0]])
    fail, x, y = _lp2(lines, 2, 2.0, 0.0, 0.0, False)
    assert fail < 2
    scratch = np.empty((2, 4))
    x, y = _lp3(lines, 2, fail, 2.0, x, y, scratch)
    # the least-violating point balances both constraints
    assert abs(y) <= 1e-9
