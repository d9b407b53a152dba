"""Skeletal gait representation, validation, and ingestion.

A gait is a ``(frames, 16, 3)`` array of world-space joint positions in
meters (y up) sampled at a fixed frame rate. Two on-disk sources are
supported: the native JSON gait document and a subset of BVH.
"""
from __future__ import annotations

import enum
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CycleDetectionError, MappingError, ParseError, SchemaError

MAX_ROOT_STEP = 1.0  # meters per frame
STRIKE_WINDOW = 3  # frames either side
STRIKE_TOLERANCE = 0.02  # meters above the gait-wide minimum
BVH_DEFAULT_SCALE = 0.01  # centimeters -> meters


class JointId(enum.IntEnum):
    Root = 0
    Spine = 1
    Neck = 2
    Head = 3
    LShoulder = 4
    LElbow = 5
    LHand = 6
    RShoulder = 7
    RElbow = 8
    RHand = 9
    LHip = 10
    LKnee = 11
    LFoot = 12
    RHip = 13
    RKnee = 14
    RFoot = 15


N_JOINTS = len(JointId)
JOINT_NAMES = tuple(j.name for j in JointId)

# Parent of each joint, used for drawing and for the synthetic generator.
JOINT_PARENTS = {
    JointId.Spine: JointId.Root,
    JointId.Neck: JointId.Spine,
    JointId.Head: JointId.Neck,
    JointId.LShoulder: JointId.Neck,
    JointId.LElbow: JointId.LShoulder,
    JointId.LHand: JointId.LElbow,
    JointId.RShoulder: JointId.Neck,
    JointId.RElbow: JointId.RShoulder,
    JointId.RHand: JointId.RElbow,
    JointId.LHip: JointId.Root,
    JointId.LKnee: JointId.LHip,
    JointId.LFoot: JointId.LKnee,
    JointId.RHip: JointId.Root,
    JointId.RKnee: JointId.RHip,
    JointId.RFoot: JointId.RKnee,
}


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Gait:
    """A timed sequence of 16-joint poses.

    Attributes:
        id: Identifier, unique within a corpus.
        fps: Sampling rate in Hz.
        frames: Read-only array of shape ``(tau, 16, 3)``.
    """

    id: str
    fps: float
    frames: np.ndarray

    def __post_init__(self):
        frames = _frozen(self.frames)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "fps", float(self.fps))
        if frames.ndim != 3 or frames.shape[1:] != (N_JOINTS, 3):
            raise SchemaError(
                f"gait {self.id!r}: frames must have shape (tau, {N_JOINTS}, 3), got {frames.shape}"
            )
        if frames.shape[0] < 2:
            raise SchemaError(f"gait {self.id!r}: need at least 2 frames, got {frames.shape[0]}")
        if not (math.isfinite(self.fps) and self.fps > 0):
            raise SchemaError(f"gait {self.id!r}: fps must be positive, got {self.fps}")
        if not np.all(np.isfinite(frames)):
            bad = int(np.argwhere(~np.isfinite(frames))[0][0])
            raise SchemaError(f"gait {self.id!r}: non-finite coordinate in frame {bad}")
        root = frames[:, JointId.Root]
        steps = np.linalg.norm(np.diff(root, axis=0), axis=1)
        if np.any(steps >= MAX_ROOT_STEP):
            bad = int(np.argmax(steps >= MAX_ROOT_STEP))
            raise SchemaError(
                f"gait {self.id!r}: root moves {steps[bad]:.3f} m between frames {bad} and {bad + 1}"
            )

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def duration(self) -> float:
        return self.n_frames / self.fps

    def joint(self, j: JointId) -> np.ndarray:
        """Trajectory of one joint, shape ``(tau, 3)``."""
        return self.frames[:, j]

    def translated(self, offset) -> "Gait":
        return Gait(self.id, self.fps, self.frames + np.asarray(offset, dtype=np.float64))

    def __eq__(self, other):
        if not isinstance(other, Gait):
            return NotImplemented
        return (
            self.id == other.id
            and self.fps == other.fps
            and self.frames.shape == other.frames.shape
            and bool(np.array_equal(self.frames, other.frames))
        )

    __hash__ = None


@dataclass(frozen=True)
class WalkCycle:
    """Frames ``start_frame..end_frame`` (inclusive) of ``source``."""

    gait: Gait
    start_frame: int
    end_frame: int

    @property
    def n_frames(self) -> int:
        return self.end_frame - self.start_frame + 1


# --------------------------------------------------------------------------
# native format


def dumps_gait(gait: Gait) -> str:
    """Serialize to the canonical native text form.

    Numbers are written with ``repr`` so that loading gives back the same
    doubles; values authored with at most 9 significant digits stay that
    short.
    """
    lines = [
        "{",
        f'  "id": {json.dumps(gait.id)},',
        f'  "fps": {repr(gait.fps)},',
        '  "joints": [' + ", ".join(json.dumps(n) for n in JOINT_NAMES) + "],",
        '  "frames": [',
    ]
    rows = []
    for frame in gait.frames:
        triples = ", ".join(
            "[" + ", ".join(repr(float(c)) for c in p) + "]" for p in frame
        )
        rows.append(f"    [{triples}]")
    lines.append(",\n".join(rows))
    lines.append("  ]")
    lines.append("}")
    return "\n".join(lines) + "\n"


def save_gait(gait: Gait, path) -> None:
    Path(path).write_text(dumps_gait(gait), encoding="utf-8")


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def loads_gait(text: str) -> Gait:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid gait document: {exc.msg}", line=exc.lineno) from None
    if not isinstance(doc, dict):
        raise ParseError("gait document must be an object")
    for key in ("id", "fps", "joints", "frames"):
        if key not in doc:
            raise ParseError("missing key", field=key)
    gait_id = doc["id"]
    if not isinstance(gait_id, str):
        raise ParseError("id must be a string", field="id")
    if not _is_number(doc["fps"]):
        raise ParseError("fps must be a number", field="fps")
    joints = doc["joints"]
    if not isinstance(joints, list) or not all(isinstance(n, str) for n in joints):
        raise ParseError("joints must be a list of names", field="joints")
    if len(joints) != N_JOINTS:
        raise SchemaError(f"expected {N_JOINTS} joints, got {len(joints)}")
    unknown = [n for n in joints if n not in JointId.__members__]
    if unknown:
        raise SchemaError(f"unknown joint names: {unknown}")
    if len(set(joints)) != N_JOINTS:
        raise SchemaError("duplicate joint names")
    frames = doc["frames"]
    if not isinstance(frames, list):
        raise ParseError("frames must be a list", field="frames")
    for t, frame in enumerate(frames):
        if not isinstance(frame, list):
            raise ParseError(f"frame {t} must be a list", field="frames")
        if len(frame) != N_JOINTS:
            raise SchemaError(f"frame {t} has {len(frame)} joints, expected {N_JOINTS}")
        for p in frame:
            if not (isinstance(p, list) and len(p) == 3 and all(_is_number(c) for c in p)):
                raise ParseError(f"frame {t}: joint positions must be [x, y, z]", field="frames")
    data = np.array(frames, dtype=np.float64).reshape(len(frames), N_JOINTS, 3)
    order = [joints.index(n) for n in JOINT_NAMES]
    return Gait(gait_id, float(doc["fps"]), data[:, order])


def load_gait(path) -> Gait:
    return loads_gait(Path(path).read_text(encoding="utf-8"))


# --------------------------------------------------------------------------
# BVH subset

_CHANNELS = ("Xposition", "Yposition", "Zposition", "Xrotation", "Yrotation", "Zrotation")


@dataclass
class _BvhJoint:
    name: str
    parent: int
    offset: np.ndarray
    channels: list


def _axis_rotation(axis: str, angles: np.ndarray) -> np.ndarray:
    """Rotation matrices about a principal axis, angles in radians."""
    c, s = np.cos(angles), np.sin(angles)
    one, zero = np.ones_like(c), np.zeros_like(c)
    if axis == "X":
        rows = [[one, zero, zero], [zero, c, -s], [zero, s, c]]
    elif axis == "Y":
        rows = [[c, zero, s], [zero, one, zero], [-s, zero, c]]
    else:
        rows = [[c, -s, zero], [s, c, zero], [zero, zero, one]]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


class _Tokens:
    def __init__(self, text):
        self.items = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            for tok in line.split():
                self.items.append((tok, lineno))
        self.pos = 0

    def peek(self):
        return self.items[self.pos][0] if self.pos < len(self.items) else None

    @property
    def line(self):
        if self.pos < len(self.items):
            return self.items[self.pos][1]
        return self.items[-1][1] if self.items else 1

    def next(self):
        if self.pos >= len(self.items):
            raise ParseError("unexpected end of file", line=self.line)
        tok = self.items[self.pos][0]
        self.pos += 1
        return tok

    def expect(self, word):
        line = self.line
        tok = self.next()
        if tok != word:
            raise ParseError(f"expected {word!r}, got {tok!r}", line=line)

    def number(self):
        line = self.line
        tok = self.next()
        try:
            return float(tok)
        except ValueError:
            raise ParseError(f"expected a number, got {tok!r}", line=line) from None


def _parse_joint(toks: _Tokens, name: str, parent: int, joints: list, is_root: bool):
    idx = len(joints)
    toks.expect("{")
    toks.expect("OFFSET")
    offset = np.array([toks.number() for _ in range(3)])
    joint = _BvhJoint(name, parent, offset, [])
    joints.append(joint)
    if toks.peek() == "CHANNELS":
        toks.next()
        line = toks.line
        count_tok = toks.next()
        if count_tok not in ("3", "6"):
            raise ParseError(f"unsupported channel count {count_tok!r}", line=line)
        for _ in range(int(count_tok)):
            line = toks.line
            ch = toks.next()
            if ch not in _CHANNELS:
                raise ParseError(f"unsupported channel {ch!r}", line=line)
            if ch.endswith("position") and not is_root:
                raise ParseError(f"position channel on non-root joint {name!r}", line=line)
            joint.channels.append(ch)
    while True:
        line = toks.line
        tok = toks.next()
        if tok == "}":
            return
        if tok == "JOINT":
            _parse_joint(toks, toks.next(), idx, joints, False)
        elif tok == "End":
            toks.expect("Site")
            toks.expect("{")
            toks.expect("OFFSET")
            off = np.array([toks.number() for _ in range(3)])
            toks.expect("}")
            joints.append(_BvhJoint(f"{name}_End", idx, off, []))
        else:
            raise ParseError(f"unexpected token {tok!r}", line=line)


def parse_bvh(text: str):
    """Parse BVH text into ``(joints, frame_time, motion)``.

    ``motion`` has one row per frame and one column per channel, in
    hierarchy order. End sites become channel-less joints named
    ``<parent>_End``.
    """
    toks = _Tokens(text)
    toks.expect("HIERARCHY")
    toks.expect("ROOT")
    joints: list[_BvhJoint] = []
    _parse_joint(toks, toks.next(), -1, joints, True)
    toks.expect("MOTION")
    toks.expect("Frames:")
    line = toks.line
    n_frames = toks.number()
    if n_frames != int(n_frames) or n_frames < 1:
        raise ParseError("frame count must be a positive integer", line=line)
    n_frames = int(n_frames)
    toks.expect("Frame")
    toks.expect("Time:")
    line = toks.line
    frame_time = toks.number()
    if not frame_time > 0:
        raise ParseError("frame time must be positive", line=line)
    n_channels = sum(len(j.channels) for j in joints)
    values = []
    while toks.peek() is not None:
        values.append(toks.number())
    if len(values) != n_frames * n_channels:
        raise ParseError(
            f"expected {n_frames} x {n_channels} motion values, got {len(values)}", line=toks.line
        )
    motion = np.array(values, dtype=np.float64).reshape(n_frames, n_channels)
    return joints, frame_time, motion


def bvh_positions(joints, motion: np.ndarray, scale: float = BVH_DEFAULT_SCALE) -> np.ndarray:
    """World positions of every BVH joint, shape ``(frames, n_joints, 3)``."""
    n_frames = motion.shape[0]
    pos = np.zeros((n_frames, len(joints), 3))
    rot = np.zeros((n_frames, len(joints), 3, 3))
    col = 0
    for k, joint in enumerate(joints):
        local_t = np.broadcast_to(joint.offset * scale, (n_frames, 3)).copy()
        local_r = np.broadcast_to(np.eye(3), (n_frames, 3, 3)).copy()
        for ch in joint.channels:
            values = motion[:, col]
            col += 1
            axis = ch[0]
            if ch.endswith("position"):
                local_t[:, "XYZ".index(axis)] += values * scale
            else:
                # intrinsic: compose left to right in declared order
                local_r = local_r @ _axis_rotation(axis, np.radians(values))
        if joint.parent < 0:
            pos[:, k] = local_t
            rot[:, k] = local_r
        else:
            p = joint.parent
            pos[:, k] = pos[:, p] + np.einsum("fij,fj->fi", rot[:, p], local_t)
            rot[:, k] = rot[:, p] @ local_r
    return pos


def load_joint_map(path) -> dict:
    """Read a ``mocap_name canonical_name`` table."""
    mapping = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError("joint map rows need two columns", line=lineno)
        mapping[parts[0]] = parts[1]
    return mapping


def _resolve_joint_map(joint_map: dict, names: list) -> list:
    by_canonical = {}
    for mocap, canonical in joint_map.items():
        key = canonical.name if isinstance(canonical, JointId) else str(canonical)
        if key not in JointId.__members__:
            raise MappingError(f"unknown canonical joint {key!r}")
        if key in by_canonical:
            raise MappingError(f"canonical joint {key!r} mapped twice")
        if mocap not in names:
            raise MappingError(f"mocap joint {mocap!r} not in hierarchy")
        by_canonical[key] = names.index(mocap)
    missing = [n for n in JOINT_NAMES if n not in by_canonical]
    if missing:
        raise MappingError(f"joint map missing canonical joints: {missing}")
    return [by_canonical[n] for n in JOINT_NAMES]


def import_bvh(path, joint_map: dict, scale: float = BVH_DEFAULT_SCALE, gait_id: str | None = None) -> Gait:
    """Load a BVH file and emit the 16 canonical joints.

    Args:
        path: BVH file.
        joint_map: ``{mocap_name: canonical_name}``; must cover all 16 joints.
        scale: Multiplier from file units to meters (default assumes cm).
        gait_id: Defaults to the file stem.
    """
    path = Path(path)
    joints, frame_time, motion = parse_bvh(path.read_text(encoding="utf-8"))
    columns = _resolve_joint_map(joint_map, [j.name for j in joints])
    pos = bvh_positions(joints, motion, scale)
    return Gait(gait_id or path.stem, 1.0 / frame_time, pos[:, columns])


# --------------------------------------------------------------------------
# walk cycles


def detect_foot_strikes(gait: Gait, foot: JointId = JointId.LFoot) -> list:
    """Frames where ``foot`` touches down.

    A frame is a candidate when its height is the minimum of a +/-3 frame
    window and within 2 cm of the lowest height in the gait. Every run of
    consecutive near-ground frames contributes its first candidate.
    """
    y = gait.frames[:, foot, 1]
    n = len(y)
    low = y - y.min() <= STRIKE_TOLERANCE
    strikes = []
    in_run_with_strike = False
    for t in range(n):
        if not low[t]:
            in_run_with_strike = False
            continue
        if in_run_with_strike:
            continue
        lo, hi = max(0, t - STRIKE_WINDOW), min(n, t + STRIKE_WINDOW + 1)
        if y[t] <= y[lo:hi].min():
            strikes.append(t)
            in_run_with_strike = True
    return strikes


def extract_walk_cycle(gait: Gait) -> WalkCycle:
    """Frames between the first two left-foot strikes, inclusive."""
    strikes = detect_foot_strikes(gait, JointId.LFoot)
    if len(strikes) < 2:
        raise CycleDetectionError(
            f"gait {gait.id!r}: found {len(strikes)} left-foot strike(s), need 2"
        )
    start, end = strikes[0], strikes[1]
    sub = Gait(gait.id, gait.fps, gait.frames[start : end + 1])
    return WalkCycle(sub, start, end)


def whole_cycle(gait: Gait) -> WalkCycle:
    return WalkCycle(gait, 0, gait.n_frames - 1)


_SAFE_ID = re.compile(r"[^A-Za-z0-9_.-]+")


def gait_filename(gait_id: str) -> str:
    return _SAFE_ID.sub("_", gait_id) + ".json"
