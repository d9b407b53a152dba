"""Runtime loop for emotionally expressive walking agents.

Per frame: preferred velocities toward goals at each gait's natural speed,
one collision-avoidance step, gait playback at a speed-scaled phase, then
emotion-specific gaze applied to the neck.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CycleDetectionError, DataError, EmptyBucketError, ParseError
from .gaze import GazeConfig, apply_gaze_many, neutral_gaze_many
from .gea import Emotion, GaitEmotionAssociation, gea_lookup
from .navigation import (
    DEFAULT_MAX_SPEED,
    DEFAULT_RADIUS,
    DEFAULT_TIME_HORIZON,
    compute_velocities,
    goal_velocities,
    min_separation,
    preferred_speed,
)
from .skeleton import JOINT_NAMES, Gait, JointId, extract_walk_cycle, whole_cycle

FRAMES_FORMAT = "gaitemotion-frames"
FRAMES_VERSION = 1


@dataclass(frozen=True)
class AgentSpec:
    id: str
    emotion: Emotion
    start: tuple
    goal: tuple
    gait_id: str | None = None
    radius: float | None = None
    max_speed: float | None = None
    time_horizon: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "emotion", Emotion.parse(self.emotion))
        object.__setattr__(self, "start", tuple(float(c) for c in self.start))
        object.__setattr__(self, "goal", tuple(float(c) for c in self.goal))


@dataclass(frozen=True)
class UserPath:
    """Observer position: fixed, or piecewise-linear through timed waypoints."""

    waypoints: tuple = ((0.0, 0.0, 1.7, 0.0),)  # (t, x, y, z)

    @classmethod
    def static(cls, position) -> "UserPath":
        return cls(((0.0, *map(float, position)),))

    def at(self, t: float) -> np.ndarray:
        w = np.asarray(self.waypoints, dtype=np.float64)
        if len(w) == 1:
            return w[0, 1:].copy()
        return np.array([np.interp(t, w[:, 0], w[:, k]) for k in (1, 2, 3)])


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1.0 / 60.0
    duration: float = 10.0
    seed: int = 0
    user: UserPath = UserPath()
    gaze: GazeConfig = GazeConfig()
    radius: float = DEFAULT_RADIUS
    max_speed: float = DEFAULT_MAX_SPEED
    time_horizon: float = DEFAULT_TIME_HORIZON
    interpolate: bool = False

    def __post_init__(self):
        if not (self.dt > 0 and self.duration > 0):
            raise ValueError("dt and duration must be positive")

    @property
    def n_frames(self) -> int:
        return int(round(self.duration / self.dt))


@dataclass(frozen=True)
class FrameRecord:
    """State of every agent after one step; arrays are indexed like ``ids``."""

    time: float
    ids: tuple
    emotions: tuple
    gait_ids: tuple
    poses: np.ndarray  # (n, 16, 3)
    velocities: np.ndarray  # (n, 2) ground (x, z)
    positions: np.ndarray  # (n, 2)
    headings: np.ndarray
    phases: np.ndarray
    gaze: np.ndarray  # (n, 2) flex, rot
    min_separation: float = math.inf

    def agent(self, agent_id: str) -> int:
        return self.ids.index(agent_id)


def select_gait(gea: GaitEmotionAssociation, emotion, rng: np.random.Generator, gaits: dict | None = None):
    """Uniform random gait from the emotion's bucket (sorted ids, so seeded draws are stable).

    Returns the gait id, or the ``Gait`` itself when ``gaits`` is given.
    """
    e = Emotion.parse(emotion)
    bucket = sorted(gea_lookup(gea, e))
    if gaits is not None:
        bucket = [g for g in bucket if g in gaits]
    if not bucket:
        raise EmptyBucketError(f"no gaits associated with {e.name}")
    gid = bucket[int(rng.integers(len(bucket)))]
    return gaits[gid] if gaits is not None else gid


def intrinsic_heading(gait: Gait) -> float:
    """Heading of the gait's ground-plane root displacement (0 = +z)."""
    d = gait.frames[-1, JointId.Root] - gait.frames[0, JointId.Root]
    if math.hypot(d[0], d[2]) < 1e-9:
        return 0.0
    return math.atan2(d[0], d[2])


def _rotate_ground(points: np.ndarray, angle) -> np.ndarray:
    """Rotate ``(..., 3)`` points about +y by ``angle`` (broadcast over leading dims)."""
    angle = np.asarray(angle, dtype=np.float64)
    c, s = np.cos(angle), np.sin(angle)
    while c.ndim < points.ndim - 1:
        c, s = c[..., None], s[..., None]
    out = points.copy()
    out[..., 0] = points[..., 0] * c + points[..., 2] * s
    out[..., 2] = -points[..., 0] * s + points[..., 2] * c
    return out


def local_cycle(gait: Gait) -> np.ndarray:
    """Cycle frames with root motion removed and the walk turned to heading 0."""
    try:
        cycle = extract_walk_cycle(gait)
    except CycleDetectionError:
        cycle = whole_cycle(gait)
    f = np.array(cycle.gait.frames)
    root = f[:, JointId.Root]
    f[..., 0] -= root[:, None, 0]
    f[..., 2] -= root[:, None, 2]
    return _rotate_ground(f, -intrinsic_heading(gait))


def _phase_frames(local: np.ndarray, phases, interpolate: bool):
    n = local.shape[0]
    pos = np.asarray(phases) * (n - 1)
    if not interpolate:
        idx = np.minimum(np.rint(pos).astype(int), n - 1)
        return local[idx]
    lo = np.minimum(np.floor(pos).astype(int), n - 1)
    hi = np.minimum(lo + 1, n - 1)
    w = (pos - lo)[..., None, None]
    return local[lo] * (1.0 - w) + local[hi] * w


def retarget_pose(gait: Gait, phase: float, root_xz, heading: float, interpolate: bool = False, local=None) -> np.ndarray:
    """Pose of ``gait`` at cycle ``phase``, placed at ``root_xz`` facing ``heading``.

    The root keeps its recorded height; everything else is a rigid motion of
    the recorded frame.
    """
    local = local_cycle(gait) if local is None else local
    frame = _phase_frames(local, np.array([phase]), interpolate)[0]
    pose = _rotate_ground(frame, heading)
    pose[:, 0] += float(root_xz[0])
    pose[:, 2] += float(root_xz[1])
    return pose


def gaze_targets(emotions: np.ndarray, neck: np.ndarray, user: np.ndarray, facing: np.ndarray, neutral_flex, neutral_rot, cfg: GazeConfig):
    """Vectorized, clamped targets; mirrors ``gaze.gaze_target`` element-wise."""
    dx = user[0] - neck[:, 0]
    dz = user[2] - neck[:, 2]
    horizontal = np.sqrt((neck[:, 0] - user[0]) ** 2 + (neck[:, 2] - user[2]) ** 2)
    coincident = horizontal == 0.0
    rot_to_user = np.arctan2(dx * facing[:, 1] - dz * facing[:, 0], dx * facing[:, 0] + dz * facing[:, 1])
    ratio = np.clip((neck[:, 1] - user[1]) / np.where(coincident, 1.0, horizontal), -1.0, 1.0)
    flex = np.select(
        [emotions == Emotion.Happy, emotions == Emotion.Angry, emotions == Emotion.Sad],
        [np.full(len(emotions), cfg.theta_happy), np.arcsin(ratio), np.full(len(emotions), cfg.theta_sad)],
        neutral_flex,
    )
    rot = np.select(
        [(emotions == Emotion.Happy) | (emotions == Emotion.Angry), emotions == Emotion.Sad],
        [rot_to_user, np.zeros(len(emotions))],
        neutral_rot,
    )
    looks_at_user = (emotions == Emotion.Happy) | (emotions == Emotion.Angry)
    degenerate = looks_at_user & coincident
    flex = np.where(degenerate, 0.0, flex)
    rot = np.where(degenerate, 0.0, rot)
    flex = np.clip(flex, -cfg.max_ext, cfg.max_flex)
    rot = np.clip(rot, -cfg.max_rot, cfg.max_rot)
    return flex, rot, degenerate


class Simulation:
    """Stateful frame loop; ``simulate`` wraps it as a generator.

    Agents are held in id order so that scenario ordering never changes
    results.
    """

    def __init__(self, scenario, gea: GaitEmotionAssociation, gaits: dict, cfg: SimConfig = SimConfig()):
        specs = sorted(scenario, key=lambda s: s.id)
        ids = [s.id for s in specs]
        if len(set(ids)) != len(ids):
            raise DataError("agent ids must be unique")
        self.cfg = cfg
        self.gea = gea
        rng = np.random.default_rng(cfg.seed)
        self.ids = tuple(ids)
        self.emotions = tuple(s.emotion for s in specs)
        self._emotion_codes = np.array([int(e) for e in self.emotions])
        chosen = []
        for s in specs:
            if s.gait_id is not None:
                if s.gait_id not in gaits:
                    raise DataError(f"agent {s.id!r}: unknown gait {s.gait_id!r}")
                chosen.append(gaits[s.gait_id])
            else:
                chosen.append(select_gait(gea, s.emotion, rng, gaits))
        self.gaits = tuple(chosen)
        self.gait_ids = tuple(g.id for g in chosen)
        self.overridden = tuple(s.gait_id is not None for s in specs)

        # one cycle table per distinct gait, stacked for fancy indexing
        distinct = sorted(set(self.gait_ids))
        lookup = {g.id: g for g in chosen}
        self._locals = {gid: local_cycle(lookup[gid]) for gid in distinct}
        self._v_des = np.array([preferred_speed(g) for g in chosen])
        self._cycle_time = np.array([self._locals[g.id].shape[0] / g.fps for g in chosen])

        n = len(specs)
        self.pos = np.array([s.start for s in specs], dtype=np.float64).reshape(n, 2)
        self.goal = np.array([s.goal for s in specs], dtype=np.float64).reshape(n, 2)
        self.vel = np.zeros((n, 2))
        self.radius = np.array([cfg.radius if s.radius is None else s.radius for s in specs], dtype=np.float64)
        self.vmax = np.array([cfg.max_speed if s.max_speed is None else s.max_speed for s in specs], dtype=np.float64)
        self.horizon = np.array(
            [cfg.time_horizon if s.time_horizon is None else s.time_horizon for s in specs], dtype=np.float64
        )
        self.phase = np.zeros(n)
        d = self.goal - self.pos
        self.heading = np.where(np.hypot(d[:, 0], d[:, 1]) > 0, np.arctan2(d[:, 0], d[:, 1]), 0.0)
        self.gaze = np.zeros((n, 2))
        self.frame = 0
        self.infeasible = np.zeros(n, dtype=bool)
        self.gaze_degenerate = np.zeros(n, dtype=bool)

    @property
    def time(self) -> float:
        return self.frame * self.cfg.dt

    def _poses(self) -> np.ndarray:
        n = len(self.ids)
        frames = np.empty((n, 16, 3))
        for gid, local in self._locals.items():
            sel = np.array([g == gid for g in self.gait_ids])
            frames[sel] = _phase_frames(local, self.phase[sel], self.cfg.interpolate)
        poses = _rotate_ground(frames, self.heading)
        poses[..., 0] += self.pos[:, None, 0]
        poses[..., 2] += self.pos[:, None, 1]
        return poses

    def step(self) -> FrameRecord:
        cfg = self.cfg
        dt = cfg.dt
        n = len(self.ids)
        if n == 0:
            self.frame += 1
            empty = np.zeros((0,))
            return FrameRecord(self.time, (), (), (), np.zeros((0, 16, 3)), np.zeros((0, 2)), np.zeros((0, 2)), empty, empty, np.zeros((0, 2)))
        pref, arrived = goal_velocities(self.pos, self.goal, self._v_des, self.radius)
        vel, self.infeasible = compute_velocities(self.pos, self.vel, self.radius, pref, self.vmax, self.horizon, dt)
        self.vel = vel
        self.pos = self.pos + vel * dt
        self.frame += 1

        speed = np.hypot(vel[:, 0], vel[:, 1])
        ratio = np.where(self._v_des > 0, speed / np.where(self._v_des > 0, self._v_des, 1.0), 1.0)
        advance = np.where(arrived, 0.0, ratio * dt / self._cycle_time)
        self.phase = np.mod(self.phase + advance, 1.0)
        moving = speed > 1e-6
        self.heading = np.where(moving, np.arctan2(vel[:, 0], vel[:, 1]), self.heading)

        poses = self._poses()
        facing = np.column_stack([np.sin(self.heading), np.cos(self.heading)])
        neutral_flex, neutral_rot = neutral_gaze_many(poses, facing)
        user = cfg.user.at(self.time)
        flex_t, rot_t, self.gaze_degenerate = gaze_targets(
            self._emotion_codes, poses[:, JointId.Neck], user, facing, neutral_flex, neutral_rot, cfg.gaze
        )
        step = cfg.gaze.rate * dt
        target = np.column_stack([flex_t, rot_t])
        gap = target - self.gaze
        self.gaze = np.where(np.abs(gap) <= step, target, self.gaze + np.sign(gap) * step)
        poses = apply_gaze_many(poses, self.gaze[:, 0] - neutral_flex, self.gaze[:, 1] - neutral_rot)

        return FrameRecord(
            time=self.time,
            ids=self.ids,
            emotions=self.emotions,
            gait_ids=self.gait_ids,
            poses=poses,
            velocities=vel.copy(),
            positions=self.pos.copy(),
            headings=self.heading.copy(),
            phases=self.phase.copy(),
            gaze=self.gaze.copy(),
            min_separation=float(min_separation(self.pos, self.radius)),
        )


def simulate(scenario, gea: GaitEmotionAssociation, gaits: dict, cfg: SimConfig = SimConfig()):
    """Yield one ``FrameRecord`` per time step for ``cfg.duration`` seconds."""
    sim = Simulation(scenario, gea, gaits, cfg)
    for _ in range(cfg.n_frames):
        yield sim.step()


# --------------------------------------------------------------------------
# scenario files and export


def _floats(x):
    return [float(c) for c in x]


def scenario_from_dict(doc: dict):
    """Build ``(agents, SimConfig)`` from a parsed scenario document."""
    try:
        nav = doc.get("navigation", {})
        gaze_deg = doc.get("gaze", {})
        user = doc.get("user", {"position": [0.0, 1.7, 0.0]})
        if "path" in user:
            user_path = UserPath(tuple(tuple(_floats(w)) for w in user["path"]))
        else:
            user_path = UserPath.static(_floats(user["position"]))
        if "seed" not in doc:
            raise ParseError("scenario needs a seed", field="seed")
        cfg = SimConfig(
            dt=float(doc.get("dt", 1.0 / 60.0)),
            duration=float(doc["duration"]),
            seed=int(doc["seed"]),
            user=user_path,
            gaze=GazeConfig.from_degrees(**gaze_deg),
            radius=float(nav.get("radius", DEFAULT_RADIUS)),
            max_speed=float(nav.get("max_speed", DEFAULT_MAX_SPEED)),
            time_horizon=float(nav.get("time_horizon", DEFAULT_TIME_HORIZON)),
            interpolate=bool(doc.get("interpolate", False)),
        )
        agents = [
            AgentSpec(
                id=str(a["id"]),
                emotion=a["emotion"],
                start=_floats(a["start"]),
                goal=_floats(a["goal"]),
                gait_id=a.get("gait_id"),
                radius=a.get("radius"),
                max_speed=a.get("max_speed"),
                time_horizon=a.get("time_horizon"),
            )
            for a in doc["agents"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise ParseError(f"bad scenario: {exc}") from None
    return agents, cfg


def load_scenario(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid scenario: {exc.msg}", line=exc.lineno) from None
    return scenario_from_dict(doc)


def _frame_dict(rec: FrameRecord) -> dict:
    agents = []
    for k, aid in enumerate(rec.ids):
        agents.append(
            {
                "id": aid,
                "emotion": rec.emotions[k].name,
                "gait_id": rec.gait_ids[k],
                "position": rec.positions[k].tolist(),
                "velocity": rec.velocities[k].tolist(),
                "heading": float(rec.headings[k]),
                "phase": float(rec.phases[k]),
                "gaze": rec.gaze[k].tolist(),
                "pose": rec.poses[k].tolist(),
            }
        )
    return {"t": rec.time, "min_separation": rec.min_separation, "agents": agents}


def export_frames(stream, path, fmt: str = "jsonl") -> int:
    """Write frames as line-delimited JSON or a root-trajectory CSV; returns the frame count."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if fmt == "jsonl":
            fh.write(json.dumps({"format": FRAMES_FORMAT, "version": FRAMES_VERSION, "joints": list(JOINT_NAMES)}) + "\n")
            for rec in stream:
                fh.write(json.dumps(_frame_dict(rec), allow_nan=True) + "\n")
                count += 1
        elif fmt == "csv":
            fh.write("time,agent,x,z,heading,emotion\n")
            for rec in stream:
                for k, aid in enumerate(rec.ids):
                    x, z = rec.positions[k]
                    fh.write(f"{rec.time!r},{aid},{float(x)!r},{float(z)!r},{float(rec.headings[k])!r},{rec.emotions[k].name}\n")
                count += 1
        else:
            raise ValueError(f"unknown export format {fmt!r}")
    return count


def read_frames(path) -> list:
    """Parse a line-delimited frame export back into ``FrameRecord`` objects."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ParseError("empty frame file", line=1)
    header = json.loads(lines[0])
    if header.get("format") != FRAMES_FORMAT:
        raise ParseError("not a frame export", line=1)
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad frame record: {exc.msg}", line=lineno) from None
        a = d["agents"]
        out.append(
            FrameRecord(
                time=d["t"],
                ids=tuple(x["id"] for x in a),
                emotions=tuple(Emotion.parse(x["emotion"]) for x in a),
                gait_ids=tuple(x["gait_id"] for x in a),
                poses=np.array([x["pose"] for x in a], dtype=np.float64).reshape(len(a), 16, 3),
                velocities=np.array([x["velocity"] for x in a], dtype=np.float64).reshape(len(a), 2),
                positions=np.array([x["position"] for x in a], dtype=np.float64).reshape(len(a), 2),
                headings=np.array([x["heading"] for x in a], dtype=np.float64),
                phases=np.array([x["phase"] for x in a], dtype=np.float64),
                gaze=np.array([x["gaze"] for x in a], dtype=np.float64).reshape(len(a), 2),
                min_separation=d["min_separation"],
            )
        )
    return out


def frames_equal(a: FrameRecord, b: FrameRecord) -> bool:
    return (
        a.time == b.time
        and a.ids == b.ids
        and a.emotions == b.emotions
        and a.gait_ids == b.gait_ids
        and a.min_separation == b.min_separation
        and all(
            np.array_equal(getattr(a, f), getattr(b, f))
            for f in ("poses", "velocities", "positions", "headings", "phases", "gaze")
        )
    )


def circle_scenario(n: int, radius: float, emotions=None, prefix: str = "a") -> list:
    """Agents evenly spaced on a circle, each heading to the antipodal point."""
    emotions = emotions or [Emotion.Neutral]
    agents = []
    for k in range(n):
        a = 2.0 * math.pi * k / n
        start = (radius * math.cos(a), radius * math.sin(a))
        agents.append(AgentSpec(f"{prefix}{k:03d}", emotions[k % len(emotions)], start, (-start[0], -start[1])))
    return agents


def crossing_scenario(n_per_stream: int = 100, spacing: float = 1.5, emotions=None) -> list:
    """Two perpendicular streams of agents crossing one intersection.

    Each stream is a block of rows ``spacing`` apart, offset so the blocks
    meet at the origin; every agent walks straight through to the far side.
    """
    emotions = emotions or list(Emotion)
    cols = 10
    agents = []
    for s in range(2):
        for k in range(n_per_stream):
            row, col = divmod(k, cols)
            lateral = (col - (cols - 1) / 2.0) * spacing
            along = -(8.0 + row * spacing)
            travel = 2.0 * abs(along) + 4.0
            if s == 0:
                start, goal = (along, lateral), (along + travel, lateral)
            else:
                start, goal = (lateral, along), (lateral, along + travel)
            agents.append(AgentSpec(f"s{s}_{k:03d}", emotions[(s * n_per_stream + k) % len(emotions)], start, goal))
    return agents
