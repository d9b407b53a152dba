"""Posture and movement descriptors of a walk cycle.

The flattened vector has 29 entries: 13 posture features followed by 16
movement features, in the order of ``FEATURE_NAMES``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import CycleDetectionError, DataError, InsufficientFramesError, ParseError
from .skeleton import Gait, JointId, WalkCycle, extract_walk_cycle, whole_cycle

J = JointId
UP = np.array([0.0, 1.0, 0.0])
DEGENERATE_EPS = 1e-12

POSTURE_NAMES = (
    "volume",
    "area_hands_neck",
    "area_feet_root",
    "dist_lhand_root",
    "dist_rhand_root",
    "dist_lfoot_root",
    "dist_rfoot_root",
    "angle_neck_shoulders",
    "angle_lshoulder",
    "angle_rshoulder",
    "angle_neck_vertical_back",
    "angle_neck_head_back",
    "stride_length",
)
MOVEMENT_JOINTS = (J.LHand, J.RHand, J.LFoot, J.RFoot, J.Head)
MOVEMENT_NAMES = tuple(
    f"{j.name.lower()}_{q}" for j in MOVEMENT_JOINTS for q in ("speed", "accel", "jerk")
) + ("cycle_time",)
FEATURE_NAMES = POSTURE_NAMES + MOVEMENT_NAMES
N_FEATURES = len(FEATURE_NAMES)

# flags attached to feature results
FLAG_DEGENERATE_ANGLE = "degenerate_angle"
FLAG_WHOLE_GAIT = "whole_gait_fallback"


@dataclass(frozen=True)
class PostureFeatures:
    volume: float
    areas: tuple
    distances: tuple
    angles: tuple
    stride_length: float
    flags: frozenset = frozenset()

    def as_array(self) -> np.ndarray:
        return np.array([self.volume, *self.areas, *self.distances, *self.angles, self.stride_length])


@dataclass(frozen=True)
class MovementFeatures:
    """Mean speed/acceleration/jerk magnitudes per joint, plus cycle time.

    ``derivatives`` is a ``(5, 3)`` nested tuple ordered like
    ``MOVEMENT_JOINTS`` by (speed, accel, jerk).
    """

    derivatives: tuple
    cycle_time: float

    def as_array(self) -> np.ndarray:
        return np.array([*np.ravel(self.derivatives), self.cycle_time])


@dataclass(frozen=True)
class GaitFeatureVector:
    posture: PostureFeatures
    movement: MovementFeatures
    gait_id: str = ""
    flags: frozenset = field(default_factory=frozenset)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.posture.as_array(), self.movement.as_array()])


@dataclass(frozen=True)
class NormalizationBounds:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lo, dtype=np.float64)
        hi = np.array(self.hi, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("bounds must be 1-d arrays of equal length")
        if np.any(lo > hi):
            raise ValueError("bounds need min <= max per feature")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)


def _angle(a: np.ndarray, b: np.ndarray):
    """Per-frame angle between vector arrays ``a`` and ``b`` of shape (n, 3).

    Returns ``(angles, degenerate)``; degenerate frames get angle 0.
    """
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    degenerate = (na < DEGENERATE_EPS) | (nb < DEGENERATE_EPS)
    denom = np.where(degenerate, 1.0, na * nb)
    cos = np.clip(np.sum(a * b, axis=-1) / denom, -1.0, 1.0)
    return np.where(degenerate, 0.0, np.arccos(cos)), bool(np.any(degenerate))


def _triangle_area(a, b, c):
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=-1)


def stride_length(cycle: WalkCycle) -> float:
    f = cycle.gait.frames
    return float(np.max(np.linalg.norm(f[:, J.LFoot] - f[:, J.RFoot], axis=-1)))


def per_frame_posture(frames: np.ndarray):
    """The 12 per-frame posture scalars, shape ``(tau, 12)``, and a degeneracy flag."""
    f = frames
    p = lambda j: f[:, j]  # noqa: E731
    extent = f.max(axis=1) - f.min(axis=1)
    volume = np.prod(extent, axis=-1)
    area_hands = _triangle_area(p(J.LHand), p(J.RHand), p(J.Neck))
    area_feet = _triangle_area(p(J.LFoot), p(J.RFoot), p(J.Root))
    dists = [np.linalg.norm(p(j) - p(J.Root), axis=-1) for j in (J.LHand, J.RHand, J.LFoot, J.RFoot)]
    up = np.broadcast_to(UP, p(J.Neck).shape)
    angle_pairs = [
        (p(J.LShoulder) - p(J.Neck), p(J.RShoulder) - p(J.Neck)),
        (p(J.Neck) - p(J.LShoulder), p(J.RShoulder) - p(J.LShoulder)),
        (p(J.Neck) - p(J.RShoulder), p(J.LShoulder) - p(J.RShoulder)),
        (up, p(J.Spine) - p(J.Neck)),
        (p(J.Head) - p(J.Neck), p(J.Spine) - p(J.Neck)),
    ]
    angles, degenerate = [], False
    for a, b in angle_pairs:
        ang, deg = _angle(a, b)
        angles.append(ang)
        degenerate |= deg
    table = np.column_stack([volume, area_hands, area_feet, *dists, *angles])
    return table, degenerate


def posture_features(cycle: WalkCycle) -> PostureFeatures:
    table, degenerate = per_frame_posture(cycle.gait.frames)
    mean = table.mean(axis=0)
    flags = frozenset({FLAG_DEGENERATE_ANGLE}) if degenerate else frozenset()
    return PostureFeatures(
        volume=float(mean[0]),
        areas=tuple(float(x) for x in mean[1:3]),
        distances=tuple(float(x) for x in mean[3:7]),
        angles=tuple(float(x) for x in mean[7:12]),
        stride_length=stride_length(cycle),
        flags=flags,
    )


def movement_features(cycle: WalkCycle) -> MovementFeatures:
    """Forward-difference derivative magnitudes averaged over the cycle.

    Frames near the end that lack a k-th derivative are left out of that
    order's average.
    """
    gait = cycle.gait
    if gait.n_frames < 4:
        raise InsufficientFramesError(
            f"gait {gait.id!r}: movement features need at least 4 frames, got {gait.n_frames}"
        )
    rows = []
    for j in MOVEMENT_JOINTS:
        d = gait.frames[:, j]
        row = []
        for _ in range(3):
            d = np.diff(d, axis=0) * gait.fps
            row.append(float(np.mean(np.linalg.norm(d, axis=-1))))
        rows.append(tuple(row))
    return MovementFeatures(tuple(rows), gait.n_frames / gait.fps)


def extract_features(gait: Gait) -> GaitFeatureVector:
    """Walk-cycle features; falls back to the whole gait when no cycle is found."""
    flags = set()
    try:
        cycle = extract_walk_cycle(gait)
    except CycleDetectionError:
        cycle = whole_cycle(gait)
        flags.add(FLAG_WHOLE_GAIT)
    posture = posture_features(cycle)
    movement = movement_features(cycle)
    flags |= posture.flags
    return GaitFeatureVector(posture, movement, gait.id, frozenset(flags))


def feature_matrix(vectors) -> np.ndarray:
    rows = [v.as_array() if isinstance(v, GaitFeatureVector) else np.asarray(v, dtype=np.float64) for v in vectors]
    if not rows:
        return np.zeros((0, N_FEATURES))
    return np.vstack(rows)


def fit_normalization(corpus) -> NormalizationBounds:
    X = feature_matrix(corpus)
    if X.shape[0] == 0:
        raise DataError("cannot fit normalization bounds on an empty corpus")
    return NormalizationBounds(X.min(axis=0), X.max(axis=0))


def normalize(v, bounds: NormalizationBounds) -> np.ndarray:
    """Affine map min -> -1, max -> +1, clamped; constant features map to 0.

    Accepts a single vector or a 2-d array of row vectors.
    """
    x = v.as_array() if isinstance(v, GaitFeatureVector) else np.asarray(v, dtype=np.float64)
    span = bounds.hi - bounds.lo
    flat = span == 0
    scaled = 2.0 * (x - bounds.lo) / np.where(flat, 1.0, span) - 1.0
    return np.where(flat, 0.0, np.clip(scaled, -1.0, 1.0))


def denormalize(z, bounds: NormalizationBounds) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    return bounds.lo + (z + 1.0) * 0.5 * (bounds.hi - bounds.lo)


# --------------------------------------------------------------------------
# CSV table


def features_to_csv(rows, labels=None) -> str:
    """CSV with columns ``gait_id, <29 features>[, label]``.

    ``rows`` are ``GaitFeatureVector`` objects; ``labels`` optionally maps
    gait id to a label string.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["gait_id", *FEATURE_NAMES]
    if labels is not None:
        header.append("label")
    writer.writerow(header)
    for v in rows:
        record = [v.gait_id, *(repr(float(x)) for x in v.as_array())]
        if labels is not None:
            record.append(labels.get(v.gait_id, ""))
        writer.writerow(record)
    return buf.getvalue()


def read_features_csv(text: str):
    """Parse a feature table into ``(ids, matrix, labels_or_None)``."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty feature table", line=1) from None
    if header[: 1 + N_FEATURES] != ["gait_id", *FEATURE_NAMES]:
        raise ParseError("unexpected feature table header", line=1)
    has_label = len(header) == N_FEATURES + 2 and header[-1] == "label"
    ids, rows, labels = [], [], []
    for lineno, record in enumerate(reader, start=2):
        if not record:
            continue
        if len(record) != len(header):
            raise ParseError(f"expected {len(header)} columns, got {len(record)}", line=lineno)
        ids.append(record[0])
        try:
            rows.append([float(x) for x in record[1 : 1 + N_FEATURES]])
        except ValueError:
            raise ParseError("non-numeric feature value", line=lineno) from None
        if has_label:
            labels.append(record[-1])
    X = np.array(rows, dtype=np.float64).reshape(len(rows), N_FEATURES)
    return ids, X, (labels if has_label else None)
