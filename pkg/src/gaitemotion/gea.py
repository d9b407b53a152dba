"""Gait-emotion association built from Likert ratings.

Every rated gait gets a per-emotion mean response. A gait is labeled with
the emotion of highest mean among those strictly above the perception
threshold, or discarded when none clears it.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import numbers
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParseError, ReferentialError

DEFAULT_THETA = 3.5


class Emotion(enum.IntEnum):
    Happy = 0
    Angry = 1
    Sad = 2
    Neutral = 3

    @classmethod
    def parse(cls, name) -> "Emotion":
        if isinstance(name, Emotion):
            return name
        if isinstance(name, numbers.Integral) and not isinstance(name, bool):
            if 0 <= int(name) < len(cls):
                return cls(int(name))
            raise DataError(f"unknown emotion code {int(name)}")
        for e in cls:
            if e.name.lower() == str(name).strip().lower():
                return e
        raise DataError(f"unknown emotion {name!r}")


EMOTIONS = tuple(Emotion)
RATING_COLUMNS = ("gait_id", "participant_id", "happy", "angry", "sad", "neutral")


@dataclass(frozen=True)
class RatingRecord:
    gait_id: str
    participant_id: str
    responses: tuple  # indexed by Emotion

    def __post_init__(self):
        if len(self.responses) != len(EMOTIONS):
            raise DataError(f"rating for {self.gait_id!r} needs {len(EMOTIONS)} responses")
        for r in self.responses:
            if isinstance(r, bool) or not isinstance(r, (int, np.integer)) or not 1 <= r <= 5:
                raise DataError(
                    f"rating for {self.gait_id!r} by {self.participant_id!r}: responses must be integers 1-5"
                )


@dataclass(frozen=True)
class GaitEmotionAssociation:
    labels: dict  # gait_id -> Emotion
    mean_responses: dict  # gait_id -> tuple of 4 means
    discarded: frozenset = field(default_factory=frozenset)
    theta: float = DEFAULT_THETA

    def lookup(self, emotion) -> set:
        return gea_lookup(self, emotion)

    @property
    def rated(self) -> set:
        return set(self.mean_responses)


def mean_response(ratings) -> tuple:
    ratings = list(ratings)
    if not ratings:
        raise DataError("mean response needs at least one rating")
    ids = {r.gait_id for r in ratings}
    if len(ids) != 1:
        raise DataError(f"mean response expects ratings for one gait, got {sorted(ids)}")
    totals = [0] * len(EMOTIONS)
    for r in ratings:
        for k, v in enumerate(r.responses):
            totals[k] += int(v)
    return tuple(t / len(ratings) for t in totals)


def label_gait(means, theta: float = DEFAULT_THETA):
    """Emotion label for one gait, or ``None`` when discarded.

    Ties between equal above-threshold means go to the earlier emotion in
    ``Emotion`` order.
    """
    best = None
    for e in EMOTIONS:
        m = means[e]
        if m > theta and (best is None or m > means[best]):
            best = e
    return best


def build_gea(ratings, theta: float = DEFAULT_THETA, known_gaits=None) -> GaitEmotionAssociation:
    """Aggregate ratings into an association.

    Args:
        ratings: Iterable of ``RatingRecord``.
        theta: Perception threshold.
        known_gaits: Optional collection of valid gait ids; any rating for
            another id raises ``ReferentialError``.
    """
    grouped: dict = {}
    for r in ratings:
        grouped.setdefault(r.gait_id, []).append(r)
    if known_gaits is not None:
        known = set(known_gaits)
        unknown = sorted(set(grouped) - known)
        if unknown:
            raise ReferentialError(f"ratings reference unknown gaits: {unknown}")
    labels, means, discarded = {}, {}, set()
    for gid in sorted(grouped):
        m = mean_response(grouped[gid])
        means[gid] = m
        label = label_gait(m, theta)
        if label is None:
            discarded.add(gid)
        else:
            labels[gid] = label
    return GaitEmotionAssociation(labels, means, frozenset(discarded), float(theta))


def gea_lookup(gea: GaitEmotionAssociation, emotion) -> set:
    e = Emotion.parse(emotion)
    return {gid for gid, label in gea.labels.items() if label == e}


def emotion_distribution(gea: GaitEmotionAssociation) -> dict:
    if not gea.labels:
        raise DataError("association has no labeled gaits")
    n = len(gea.labels)
    counts = {e: 0 for e in EMOTIONS}
    for label in gea.labels.values():
        counts[label] += 1
    return {e: counts[e] / n for e in EMOTIONS}


def emotion_correlation(ratings, raw: bool = False):
    """Pearson correlation between the four emotion response columns.

    By default the columns are per-gait mean responses; ``raw=True`` uses
    individual participant rows instead. Returns ``(matrix, defined)``
    where entries involving a zero-variance column are NaN and marked
    False in ``defined``.
    """
    ratings = list(ratings)
    if raw:
        data = np.array([r.responses for r in ratings], dtype=np.float64)
        if data.shape[0] < 2:
            raise DataError("correlation needs at least two rating rows")
    else:
        gea = build_gea(ratings)
        if len(gea.mean_responses) < 2:
            raise DataError("correlation needs at least two rated gaits")
        data = np.array([gea.mean_responses[g] for g in sorted(gea.mean_responses)])
    return correlation_matrix(data)


def correlation_matrix(data: np.ndarray):
    centered = data - data.mean(axis=0)
    ss = np.sqrt(np.sum(centered**2, axis=0))
    defined_col = ss > 0
    k = data.shape[1]
    corr = np.full((k, k), np.nan)
    defined = np.outer(defined_col, defined_col)
    for a in range(k):
        for b in range(k):
            if defined[a, b]:
                corr[a, b] = 1.0 if a == b else float(np.dot(centered[:, a], centered[:, b]) / (ss[a] * ss[b]))
    return corr, defined


# --------------------------------------------------------------------------
# files


def read_ratings_csv(text: str) -> list:
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip().lower() for h in next(reader)]
    except StopIteration:
        raise ParseError("empty ratings file", line=1) from None
    if tuple(header) != RATING_COLUMNS:
        raise ParseError(f"ratings header must be {','.join(RATING_COLUMNS)}", line=1)
    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(RATING_COLUMNS):
            raise ParseError(f"expected {len(RATING_COLUMNS)} columns, got {len(row)}", line=lineno)
        try:
            responses = tuple(int(c) for c in row[2:])
        except ValueError:
            raise ParseError("ratings must be integers", line=lineno) from None
        try:
            records.append(RatingRecord(row[0].strip(), row[1].strip(), responses))
        except DataError as exc:
            raise ParseError(str(exc), line=lineno) from None
    return records


def load_ratings(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return read_ratings_csv(fh.read())


def ratings_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RATING_COLUMNS)
    for r in records:
        w.writerow([r.gait_id, r.participant_id, *r.responses])
    return buf.getvalue()


ASSOCIATION_VERSION = 1


def dumps_gea(gea: GaitEmotionAssociation) -> str:
    gaits = {}
    for gid in sorted(gea.mean_responses):
        label = gea.labels.get(gid)
        gaits[gid] = {
            "label": label.name if label is not None else None,
            "means": {e.name.lower(): gea.mean_responses[gid][e] for e in EMOTIONS},
        }
    doc = {"version": ASSOCIATION_VERSION, "theta": gea.theta, "gaits": gaits}
    return json.dumps(doc, indent=2) + "\n"


def loads_gea(text: str) -> GaitEmotionAssociation:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid association document: {exc.msg}", line=exc.lineno) from None
    if not isinstance(doc, dict) or "gaits" not in doc or "theta" not in doc:
        raise ParseError("association document needs 'theta' and 'gaits'")
    if doc.get("version") != ASSOCIATION_VERSION:
        raise ParseError(f"unsupported association version {doc.get('version')!r}", field="version")
    labels, means, discarded = {}, {}, set()
    for gid, entry in doc["gaits"].items():
        try:
            means[gid] = tuple(float(entry["means"][e.name.lower()]) for e in EMOTIONS)
        except (KeyError, TypeError, ValueError):
            raise ParseError(f"bad means for gait {gid!r}", field="means") from None
        if entry.get("label") is None:
            discarded.add(gid)
        else:
            labels[gid] = Emotion.parse(entry["label"])
    return GaitEmotionAssociation(labels, means, frozenset(discarded), float(doc["theta"]))


def load_gea(path) -> GaitEmotionAssociation:
    with open(path, encoding="utf-8") as fh:
        return loads_gea(fh.read())


def save_gea(gea: GaitEmotionAssociation, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_gea(gea))
