"""Reciprocal collision avoidance on the ground plane.

Each neighbor contributes one half-plane of permitted velocities (the
avoidance effort split evenly between the pair). The new velocity is the
point of the intersection of those half-planes and the max-speed disc
closest to the preferred velocity, found by incremental 2-d linear
programming. When the half-planes have no common point, the velocity that
minimizes the largest constraint violation is used instead.

Ground coordinates are the world ``(x, z)`` components.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .skeleton import Gait, JointId

EPSILON = 1e-5
DEFAULT_RADIUS = 0.3
DEFAULT_TIME_HORIZON = 2.0
DEFAULT_MAX_SPEED = 2.0
# Rightward turn of the preferred direction applied only while neighbors are
# in range; breaks mirror-symmetric deadlocks (e.g. antipodal swaps).
SYMMETRY_BIAS = 0.05
# Extra clearance (m) added to each pair's combined radius inside the
# avoidance constraints; absorbs violations when constraints are infeasible.
SAFETY_MARGIN = 0.01


@dataclass(frozen=True)
class NavAgent:
    id: str
    position: tuple
    velocity: tuple = (0.0, 0.0)
    radius: float = DEFAULT_RADIUS
    preferred_velocity: tuple = (0.0, 0.0)
    max_speed: float = DEFAULT_MAX_SPEED
    time_horizon: float = DEFAULT_TIME_HORIZON

    def __post_init__(self):
        for name in ("position", "velocity", "preferred_velocity"):
            v = tuple(float(c) for c in getattr(self, name))
            if len(v) != 2:
                raise ValueError(f"{name} must be 2-d")
            object.__setattr__(self, name, v)
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if not self.time_horizon > 0:
            raise ValueError("time horizon must be positive")
        if not self.max_speed >= 0:
            raise ValueError("max speed must be non-negative")
        if math.hypot(*self.velocity) > self.max_speed + 1e-9:
            raise ValueError(f"agent {self.id!r}: speed exceeds max_speed")


@dataclass(frozen=True)
class NavWorld:
    agents: tuple
    dt: float
    # per-agent flag from the last step: constraints had no common solution
    infeasible: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        ids = [a.id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ValueError("agent ids must be unique")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    def by_id(self) -> dict:
        return {a.id: a for a in self.agents}


def preferred_speed(gait: Gait) -> float:
    """Ground-plane root displacement over the gait, per frame, in m/s."""
    root = gait.frames[:, JointId.Root]
    d = root[-1] - root[0]
    per_frame = math.hypot(d[0], d[2]) / gait.n_frames
    return per_frame * gait.fps


# --------------------------------------------------------------------------
# compiled core


@numba.njit(cache=True)
def _det(ax, ay, bx, by):
    return ax * by - ay * bx


@numba.njit(cache=True)
def _lp1(lines, line_no, radius, optx, opty, direction_opt, rx, ry):
    px, py, dx, dy = lines[line_no, 0], lines[line_no, 1], lines[line_no, 2], lines[line_no, 3]
    dot = px * dx + py * dy
    disc = dot * dot + radius * radius - (px * px + py * py)
    if disc < 0.0:
        return False, rx, ry
    sq = math.sqrt(disc)
    t_left = -dot - sq
    t_right = -dot + sq
    for i in range(line_no):
        denom = _det(dx, dy, lines[i, 2], lines[i, 3])
        numer = _det(lines[i, 2], lines[i, 3], px - lines[i, 0], py - lines[i, 1])
        if abs(denom) <= EPSILON:
            if numer < 0.0:
                return False, rx, ry
            continue
        t = numer / denom
        if denom >= 0.0:
            t_right = min(t_right, t)
        else:
            t_left = max(t_left, t)
        if t_left > t_right:
            return False, rx, ry
    if direction_opt:
        if optx * dx + opty * dy > 0.0:
            return True, px + t_right * dx, py + t_right * dy
        return True, px + t_left * dx, py + t_left * dy
    t = dx * (optx - px) + dy * (opty - py)
    if t < t_left:
        t = t_left
    elif t > t_right:
        t = t_right
    return True, px + t * dx, py + t * dy


@numba.njit(cache=True)
def _lp2(lines, n, radius, optx, opty, direction_opt):
    if direction_opt:
        rx, ry = optx * radius, opty * radius
    else:
        norm_sq = optx * optx + opty * opty
        if norm_sq > radius * radius:
            norm = math.sqrt(norm_sq)
            rx, ry = optx / norm * radius, opty / norm * radius
        else:
            rx, ry = optx, opty
    for i in range(n):
        if _det(lines[i, 2], lines[i, 3], lines[i, 0] - rx, lines[i, 1] - ry) > 0.0:
            ok, nx, ny = _lp1(lines, i, radius, optx, opty, direction_opt, rx, ry)
            if not ok:
                return i, rx, ry
            rx, ry = nx, ny
    return n, rx, ry


@numba.njit(cache=True)
def _lp3(lines, n, begin, radius, rx, ry, scratch):
    distance = 0.0
    for i in range(begin, n):
        pix, piy, dix, diy = lines[i, 0], lines[i, 1], lines[i, 2], lines[i, 3]
        if _det(dix, diy, pix - rx, piy - ry) > distance:
            m = 0
            for j in range(i):
                pjx, pjy, djx, djy = lines[j, 0], lines[j, 1], lines[j, 2], lines[j, 3]
                determinant = _det(dix, diy, djx, djy)
                if abs(determinant) <= EPSILON:
                    if dix * djx + diy * djy > 0.0:
                        continue
                    qx, qy = 0.5 * (pix + pjx), 0.5 * (piy + pjy)
                else:
                    s = _det(djx, djy, pix - pjx, piy - pjy) / determinant
                    qx, qy = pix + s * dix, piy + s * diy
                ux, uy = djx - dix, djy - diy
                un = math.sqrt(ux * ux + uy * uy)
                scratch[m, 0] = qx
                scratch[m, 1] = qy
                scratch[m, 2] = ux / un
                scratch[m, 3] = uy / un
                m += 1
            fail, nx, ny = _lp2(scratch, m, radius, -diy, dix, True)
            if fail >= m:
                rx, ry = nx, ny
            distance = _det(dix, diy, pix - rx, piy - ry)
    return rx, ry


@numba.njit(cache=True)
def _orca_velocity(k, order, pos, vel, radius, pref, max_speed, horizon, dt, bias, margin, lines, scratch):
    """New velocity of agent ``k`` against the agents listed in ``order``."""
    inv_h = 1.0 / horizon[k]
    n = 0
    for idx in range(order.shape[0]):
        o = order[idx]
        if o == k:
            continue
        rpx = pos[o, 0] - pos[k, 0]
        rpy = pos[o, 1] - pos[k, 1]
        dist_sq = rpx * rpx + rpy * rpy
        combined = radius[k] + radius[o] + margin
        reach = (max_speed[k] + max_speed[o]) * horizon[k] + combined
        if dist_sq > reach * reach:
            continue
        rvx = vel[k, 0] - vel[o, 0]
        rvy = vel[k, 1] - vel[o, 1]
        combined_sq = combined * combined
        if dist_sq > combined_sq:
            wx = rvx - inv_h * rpx
            wy = rvy - inv_h * rpy
            w_sq = wx * wx + wy * wy
            dot1 = wx * rpx + wy * rpy
            if dot1 < 0.0 and dot1 * dot1 > combined_sq * w_sq:
                # closest boundary point lies on the cut-off circle
                wl = math.sqrt(w_sq)
                uwx, uwy = wx / wl, wy / wl
                dx, dy = uwy, -uwx
                ux = (combined * inv_h - wl) * uwx
                uy = (combined * inv_h - wl) * uwy
            else:
                leg = math.sqrt(dist_sq - combined_sq)
                if _det(rpx, rpy, wx, wy) > 0.0:
                    dx = (rpx * leg - rpy * combined) / dist_sq
                    dy = (rpx * combined + rpy * leg) / dist_sq
                else:
                    dx = -(rpx * leg + rpy * combined) / dist_sq
                    dy = -(-rpx * combined + rpy * leg) / dist_sq
                dot2 = rvx * dx + rvy * dy
                ux = dot2 * dx - rvx
                uy = dot2 * dy - rvy
        else:
            # already overlapping: resolve within one step
            inv_dt = 1.0 / dt
            wx = rvx - inv_dt * rpx
            wy = rvy - inv_dt * rpy
            wl = math.sqrt(wx * wx + wy * wy)
            if wl < 1e-12:
                uwx, uwy = 1.0, 0.0
            else:
                uwx, uwy = wx / wl, wy / wl
            dx, dy = uwy, -uwx
            ux = (combined * inv_dt - wl) * uwx
            uy = (combined * inv_dt - wl) * uwy
        lines[n, 0] = vel[k, 0] + 0.5 * ux
        lines[n, 1] = vel[k, 1] + 0.5 * uy
        lines[n, 2] = dx
        lines[n, 3] = dy
        n += 1
    optx, opty = pref[k, 0], pref[k, 1]
    if n > 0 and bias != 0.0:
        c, s = math.cos(bias), math.sin(bias)
        optx, opty = optx * c - opty * s, opty * c + optx * s
    fail, rx, ry = _lp2(lines, n, max_speed[k], optx, opty, False)
    infeasible = fail < n
    if infeasible:
        rx, ry = _lp3(lines, n, fail, max_speed[k], rx, ry, scratch)
    return rx, ry, infeasible


@numba.njit(cache=True)
def _all_velocities(pos, vel, radius, pref, max_speed, horizon, dt, bias, margin):
    n = pos.shape[0]
    out = np.empty((n, 2))
    flags = np.zeros(n, dtype=np.bool_)
    lines = np.empty((max(n, 1), 4))
    scratch = np.empty((max(n, 1), 4))
    order = np.arange(n)
    for k in range(n):
        rx, ry, bad = _orca_velocity(k, order, pos, vel, radius, pref, max_speed, horizon, dt, bias, margin, lines, scratch)
        out[k, 0] = rx
        out[k, 1] = ry
        flags[k] = bad
    return out, flags


@numba.njit(cache=True)
def min_separation(pos, radius):
    """Smallest ``distance - (r_i + r_j)`` over all pairs (inf for < 2 agents)."""
    best = np.inf
    n = pos.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            gap = math.sqrt(dx * dx + dy * dy) - radius[i] - radius[j]
            if gap < best:
                best = gap
    return best


def _clamp_speed(v: np.ndarray, max_speed: np.ndarray) -> np.ndarray:
    speed = np.hypot(v[:, 0], v[:, 1])
    over = speed > max_speed
    if np.any(over):
        v = v.copy()
        v[over] *= (max_speed[over] / speed[over])[:, None]
    return v


def compute_velocities(pos, vel, radius, pref, max_speed, horizon, dt, bias=SYMMETRY_BIAS, margin=SAFETY_MARGIN):
    """Vectorized entry point over struct-of-arrays agent state.

    Agents are processed against each other in array order; callers that need
    order independence sort the arrays by a stable key first. Returns
    ``(velocities, infeasible_flags)``.
    """
    args = [np.ascontiguousarray(a, dtype=np.float64) for a in (pos, vel, radius, pref, max_speed, horizon)]
    out, flags = _all_velocities(*args, float(dt), float(bias), float(margin))
    return _clamp_speed(out, args[4]), flags


def _arrays(agents):
    pos = np.array([a.position for a in agents], dtype=np.float64).reshape(-1, 2)
    vel = np.array([a.velocity for a in agents], dtype=np.float64).reshape(-1, 2)
    radius = np.array([a.radius for a in agents], dtype=np.float64)
    pref = np.array([a.preferred_velocity for a in agents], dtype=np.float64).reshape(-1, 2)
    vmax = np.array([a.max_speed for a in agents], dtype=np.float64)
    horizon = np.array([a.time_horizon for a in agents], dtype=np.float64)
    return pos, vel, radius, pref, vmax, horizon


def compute_new_velocity(agent: NavAgent, neighbors, dt: float, return_flag: bool = False, bias: float = SYMMETRY_BIAS, margin: float = SAFETY_MARGIN):
    """Collision-avoiding velocity for ``agent`` given its neighbors."""
    others = sorted((n for n in neighbors if n.id != agent.id), key=lambda a: a.id)
    everyone = [agent, *others]
    arrays = [np.ascontiguousarray(a) for a in _arrays(everyone)]
    lines = np.empty((len(everyone), 4))
    scratch = np.empty((len(everyone), 4))
    rx, ry, bad = _orca_velocity(0, np.arange(len(everyone)), *arrays, float(dt), float(bias), float(margin), lines, scratch)
    v = _clamp_speed(np.array([[rx, ry]]), arrays[4][:1])[0]
    return (v, bool(bad)) if return_flag else v


def step(world: NavWorld, dt: float | None = None) -> NavWorld:
    """Advance every agent by one time step.

    All velocities are computed from the same snapshot, then positions are
    integrated. Agents are ordered by id internally so the result does not
    depend on storage order.
    """
    dt = world.dt if dt is None else float(dt)
    order = sorted(range(len(world.agents)), key=lambda i: world.agents[i].id)
    agents = [world.agents[i] for i in order]
    if not agents:
        return world
    pos, vel, radius, pref, vmax, horizon = _arrays(agents)
    new_vel, flags = compute_velocities(pos, vel, radius, pref, vmax, horizon, dt)
    new_pos = pos + new_vel * dt
    moved = {}
    for k, a in enumerate(agents):
        moved[a.id] = replace(
            a,
            position=(float(new_pos[k, 0]), float(new_pos[k, 1])),
            velocity=(float(new_vel[k, 0]), float(new_vel[k, 1])),
        )
    bad = frozenset(a.id for k, a in enumerate(agents) if flags[k])
    return NavWorld(tuple(moved[a.id] for a in world.agents), world.dt, bad)


def goal_velocity(position, goal, speed: float, radius: float) -> np.ndarray:
    """Preferred velocity: toward ``goal`` at ``speed``; zero within two radii."""
    d = np.asarray(goal, dtype=np.float64) - np.asarray(position, dtype=np.float64)
    dist = math.hypot(d[0], d[1])
    if dist <= 2.0 * radius or dist == 0.0:
        return np.zeros(2)
    return d * (speed / dist)


def goal_velocities(pos, goals, speeds, radius):
    d = goals - pos
    dist = np.hypot(d[:, 0], d[:, 1])
    arrived = dist <= 2.0 * radius
    scale = np.where(arrived, 0.0, speeds / np.where(dist > 0, dist, 1.0))
    return d * scale[:, None], arrived
