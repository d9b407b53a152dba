"""Emotion-dependent neck angles.

Two angles are controlled: ``flex`` (pitch; positive bows the head down,
negative lifts it) and ``rot`` (yaw; positive turns left). World axes are
y up; an agent with heading ``h`` faces ``(sin h, 0, cos h)`` and its left
is ``up x facing``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gea import Emotion
from .skeleton import JointId

UP = np.array([0.0, 1.0, 0.0])


@dataclass(frozen=True)
class GazeAngles:
    flex: float = 0.0
    rot: float = 0.0
    flagged: bool = False  # computed from a degenerate configuration


@dataclass(frozen=True)
class GazeConfig:
    """Angle constants in radians; see ``from_degrees`` for config files."""

    theta_happy: float = math.radians(-5.0)
    theta_sad: float = math.radians(10.0)
    max_rot: float = math.radians(70.0)
    max_flex: float = math.radians(45.0)
    max_ext: float = math.radians(45.0)
    rate: float = math.radians(90.0)  # per second

    def __post_init__(self):
        if not (self.max_rot > 0 and self.max_flex > 0 and self.max_ext > 0 and self.rate > 0):
            raise ValueError("gaze limits and rate must be positive")

    @classmethod
    def from_degrees(cls, **deg) -> "GazeConfig":
        return cls(**{k: math.radians(float(v)) for k, v in deg.items()})

    def to_degrees(self) -> dict:
        return {k: math.degrees(getattr(self, k)) for k in ("theta_happy", "theta_sad", "max_rot", "max_flex", "max_ext", "rate")}


@dataclass(frozen=True)
class GazeContext:
    agent: tuple  # head-base (neck) position, 3-d
    user: tuple  # observer position, 3-d
    facing: tuple  # 2-d ground (x, z) or 3-d

    def __post_init__(self):
        f = np.asarray(self.facing, dtype=np.float64)
        if not np.any(f):
            raise ValueError("facing direction must be non-zero")


def signed_angle(d, f) -> float:
    """Angle turning ground direction ``f`` onto ``d``; positive is leftward.

    Both arguments are ground-plane ``(x, z)`` vectors.
    """
    left = d[0] * f[1] - d[1] * f[0]
    fwd = d[0] * f[0] + d[1] * f[1]
    return math.atan2(left, fwd)


def _ground(v) -> tuple:
    v = tuple(float(c) for c in v)
    return (v[0], v[2]) if len(v) == 3 else v


def clamp_gaze(angles: GazeAngles, cfg: GazeConfig) -> GazeAngles:
    return GazeAngles(
        min(max(angles.flex, -cfg.max_ext), cfg.max_flex),
        min(max(angles.rot, -cfg.max_rot), cfg.max_rot),
        angles.flagged,
    )


def raw_gaze_target(emotion: Emotion, ctx: GazeContext, gait_neutral: GazeAngles, cfg: GazeConfig) -> GazeAngles:
    """Target angles before clamping."""
    emotion = Emotion.parse(emotion)
    if emotion == Emotion.Sad:
        return GazeAngles(cfg.theta_sad, 0.0)
    if emotion == Emotion.Neutral:
        return gait_neutral
    xi, yi, zi = (float(c) for c in ctx.agent)
    xu, yu, zu = (float(c) for c in ctx.user)
    horizontal = math.sqrt((xi - xu) ** 2 + (zi - zu) ** 2)
    if horizontal == 0.0:
        return GazeAngles(0.0, 0.0, True)
    rot = signed_angle((xu - xi, zu - zi), _ground(ctx.facing))
    if emotion == Emotion.Happy:
        return GazeAngles(cfg.theta_happy, rot)
    ratio = min(max((yi - yu) / horizontal, -1.0), 1.0)
    return GazeAngles(math.asin(ratio), rot)


def gaze_target(emotion: Emotion, ctx: GazeContext, gait_neutral: GazeAngles = GazeAngles(), cfg: GazeConfig = GazeConfig()) -> GazeAngles:
    """Neck angles for ``emotion``, clamped to the configured range.

    Happy: fixed extension, turned toward the user. Angry: pitched and
    turned to look straight at the user. Sad: fixed flexion, no turn.
    Neutral: the angles measured from the agent's own gait.
    """
    return clamp_gaze(raw_gaze_target(emotion, ctx, gait_neutral, cfg), cfg)


def _approach(current: float, target: float, step: float) -> float:
    gap = target - current
    if abs(gap) <= step:
        return target
    return current + math.copysign(step, gap)


def smooth_gaze(current: GazeAngles, target: GazeAngles, dt: float, cfg: GazeConfig = GazeConfig()) -> GazeAngles:
    """Move each angle toward ``target`` by at most ``rate * dt``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    step = cfg.rate * dt
    return GazeAngles(_approach(current.flex, target.flex, step), _approach(current.rot, target.rot, step), target.flagged)


# --------------------------------------------------------------------------
# pose application


def _rotate(v: np.ndarray, axis: np.ndarray, angle) -> np.ndarray:
    """Rodrigues rotation of row vectors ``v`` about unit ``axis`` rows."""
    c = np.cos(angle)[..., None]
    s = np.sin(angle)[..., None]
    dot = np.sum(axis * v, axis=-1, keepdims=True)
    return v * c + np.cross(axis, v) * s + axis * dot * (1.0 - c)


def body_left(poses: np.ndarray) -> tuple:
    """Ground-plane unit left vector of each pose, from shoulders then hips.

    Returns ``(left, ok)``; ``left`` has shape ``(n, 3)`` and falls back to
    +x where neither segment has a horizontal extent.
    """
    poses = np.asarray(poses, dtype=np.float64)
    left = np.zeros(poses.shape[:-2] + (3,))
    ok = np.zeros(poses.shape[:-2], dtype=bool)
    for a, b in ((JointId.LShoulder, JointId.RShoulder), (JointId.LHip, JointId.RHip)):
        d = poses[..., a, :] - poses[..., b, :]
        d[..., 1] = 0.0
        n = np.linalg.norm(d, axis=-1)
        use = ~ok & (n > 1e-9)
        left[use] = d[use] / n[use][..., None]
        ok |= use
    left[~ok] = (1.0, 0.0, 0.0)
    return left, ok


def apply_gaze_many(poses: np.ndarray, flex, rot) -> np.ndarray:
    """Batch form of ``apply_gaze`` over poses of shape ``(n, 16, 3)``."""
    poses = np.array(poses, dtype=np.float64)
    flex = np.broadcast_to(np.asarray(flex, dtype=np.float64), poses.shape[:1])
    rot = np.broadcast_to(np.asarray(rot, dtype=np.float64), poses.shape[:1])
    neck = poses[:, JointId.Neck]
    seg = poses[:, JointId.Head] - neck
    length = np.linalg.norm(seg, axis=-1)
    live = length > 1e-12
    up = np.broadcast_to(UP, seg.shape)
    left, _ = body_left(poses)
    seg = _rotate(seg, up, rot)
    left = _rotate(left, up, rot)
    seg = _rotate(seg, left, flex)
    head = np.where(live[:, None], neck + seg, poses[:, JointId.Head])
    poses[:, JointId.Head] = head
    return poses


def apply_gaze(pose, angles: GazeAngles) -> np.ndarray:
    """Rotate the Neck->Head segment: yaw ``rot`` about the vertical through
    the neck, then pitch ``flex`` about the (yawed) body-lateral axis.

    A zero-length segment leaves the pose unchanged.
    """
    pose = np.asarray(pose, dtype=np.float64)
    return apply_gaze_many(pose[None], angles.flex, angles.rot)[0]


def neutral_gaze_many(poses: np.ndarray, facing: np.ndarray):
    """Angles of the recorded Neck->Head segment relative to ``facing``.

    ``flex`` is the pitch of the segment away from vertical in the facing
    direction; ``rot`` is the yaw of its horizontal lean (0 when the
    segment is vertical). ``facing`` rows are ground ``(x, z)`` unit vectors.
    """
    seg = poses[:, JointId.Head] - poses[:, JointId.Neck]
    fx, fz = facing[:, 0], facing[:, 1]
    fwd = seg[:, 0] * fx + seg[:, 2] * fz
    lat = seg[:, 0] * fz - seg[:, 2] * fx
    flex = np.arctan2(fwd, seg[:, 1])
    horiz = np.hypot(fwd, lat)
    length = np.linalg.norm(seg, axis=-1)
    lean = horiz > 1e-9 * np.maximum(length, 1e-300)
    rot = np.where(lean & (fwd > 0), np.arctan2(lat, np.where(fwd > 0, fwd, 1.0)), 0.0)
    return flex, rot


def neutral_gaze(pose, facing) -> GazeAngles:
    pose = np.asarray(pose, dtype=np.float64)
    f = np.asarray(_ground(facing), dtype=np.float64)
    f = f / np.linalg.norm(f)
    flex, rot = neutral_gaze_many(pose[None], f[None])
    return GazeAngles(float(flex[0]), float(rot[0]))
