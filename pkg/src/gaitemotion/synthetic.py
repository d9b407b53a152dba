"""Procedural walking skeletons and rating corpora.

These stand in for motion-capture corpora in tests, demos, and the
simulator. Each emotion has a style (speed, cadence, arm swing, body
expansion, head carriage) loosely following the usual expressive cues:
expanded and brisk for happy, fast and forward-leaning for angry, slow and
collapsed for sad.
"""
from __future__ import annotations

import argparse
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .gea import EMOTIONS, Emotion, RatingRecord, ratings_to_csv
from .skeleton import N_JOINTS, Gait, JointId, gait_filename, save_gait

J = JointId


@dataclass(frozen=True)
class WalkStyle:
    speed: float = 1.2  # m/s
    cycle_frames: int = 60
    lift: float = 0.12
    arm_swing: float = 0.2
    arm_spread: float = 0.0
    head_pitch: float = 0.0  # radians, positive = bowed
    lean: float = 0.0  # forward spine lean, radians
    bob: float = 0.015


STYLES = {
    Emotion.Happy: WalkStyle(1.45, 54, 0.14, 0.30, 0.12, -0.15, -0.02, 0.02),
    Emotion.Angry: WalkStyle(1.55, 50, 0.13, 0.34, 0.05, 0.05, 0.12, 0.025),
    Emotion.Sad: WalkStyle(0.75, 76, 0.07, 0.08, -0.04, 0.40, 0.15, 0.008),
    Emotion.Neutral: WalkStyle(1.15, 62, 0.11, 0.18, 0.0, 0.02, 0.02, 0.015),
}


def synthetic_walk(
    gait_id: str,
    style: WalkStyle = WalkStyle(),
    fps: float = 60.0,
    n_frames: int = 120,
    strike_frame: int = 10,
    heading: float = 0.0,
    origin=(0.0, 0.0, 0.0),
    rng: np.random.Generator | None = None,
    noise: float = 0.0,
) -> Gait:
    """A straight walk with left-foot strikes at ``strike_frame + k * cycle_frames``.

    The body walks along +z before being turned by ``heading`` about the
    vertical axis and shifted to ``origin``.
    """
    t = np.arange(n_frames, dtype=np.float64)
    phi = 2.0 * np.pi * (t - strike_frame) / style.cycle_frames
    stride = style.speed * style.cycle_frames / fps
    root_z = style.speed * t / fps
    root_y = 0.95 + style.bob * np.cos(2.0 * phi)

    f = np.zeros((n_frames, N_JOINTS, 3))

    def put(j, x, y, z):
        f[:, j, 0] = x
        f[:, j, 1] = y
        f[:, j, 2] = z

    sl, cl = math.sin(style.lean), math.cos(style.lean)
    put(J.Root, 0.0, root_y, root_z)
    put(J.Spine, 0.0, root_y + 0.25 * cl, root_z + 0.25 * sl)
    neck_y, neck_z = root_y + 0.55 * cl, root_z + 0.55 * sl
    put(J.Neck, 0.0, neck_y, neck_z)
    hp = style.lean + style.head_pitch
    put(J.Head, 0.0, neck_y + 0.2 * math.cos(hp), neck_z + 0.2 * math.sin(hp))
    for side, sign, leg_phase in ((0, 1.0, phi), (1, -1.0, phi + np.pi)):
        sh, el, ha = (J.LShoulder, J.LElbow, J.LHand) if side == 0 else (J.RShoulder, J.RElbow, J.RHand)
        hip, knee, foot = (J.LHip, J.LKnee, J.LFoot) if side == 0 else (J.RHip, J.RKnee, J.RFoot)
        swing = -style.arm_swing * np.cos(leg_phase)
        sx = sign * 0.18
        put(sh, sx, neck_y - 0.03, neck_z)
        put(el, sx + sign * (0.5 * style.arm_spread + 0.02), neck_y - 0.31, neck_z + 0.5 * swing)
        put(ha, sx + sign * (style.arm_spread + 0.03), neck_y - 0.58, neck_z + swing)
        foot_y = 0.05 + style.lift * (1.0 - np.cos(leg_phase)) / 2.0
        foot_z = root_z + 0.5 * stride * np.cos(leg_phase)
        hx = sign * 0.1
        put(hip, hx, root_y - 0.05, root_z)
        put(knee, hx, 0.5 * (root_y - 0.05 + foot_y) + 0.02, 0.5 * (root_z + foot_z) + 0.06)
        put(foot, hx, foot_y, foot_z)

    if noise > 0:
        rng = rng or np.random.default_rng(0)
        f += rng.normal(scale=noise, size=f.shape)
    c, s = math.cos(heading), math.sin(heading)
    x, z = f[..., 0].copy(), f[..., 2].copy()
    f[..., 0] = x * c + z * s + origin[0]
    f[..., 2] = -x * s + z * c + origin[2]
    f[..., 1] += origin[1]
    return Gait(gait_id, fps, f)


def jittered_style(emotion: Emotion, rng: np.random.Generator, amount: float = 0.15) -> WalkStyle:
    base = STYLES[emotion]
    k = lambda: 1.0 + amount * rng.uniform(-1.0, 1.0)  # noqa: E731
    return replace(
        base,
        speed=base.speed * k(),
        cycle_frames=max(24, int(round(base.cycle_frames * k()))),
        lift=base.lift * k(),
        arm_swing=base.arm_swing * k(),
        arm_spread=base.arm_spread + 0.03 * rng.uniform(-1.0, 1.0),
        head_pitch=base.head_pitch + 0.05 * rng.uniform(-1.0, 1.0),
        lean=base.lean + 0.03 * rng.uniform(-1.0, 1.0),
    )


def synthetic_ratings(gait_id: str, emotion: Emotion | None, rng: np.random.Generator, n_participants: int = 10) -> list:
    """Likert responses that mostly agree with ``emotion``; ``None`` yields an ambiguous gait."""
    records = []
    for p in range(n_participants):
        responses = []
        for e in EMOTIONS:
            if emotion is None:
                centre = 2.6
            elif e == emotion:
                centre = 4.4
            else:
                centre = 1.8
            responses.append(int(np.clip(np.rint(rng.normal(centre, 0.7)), 1, 5)))
        records.append(RatingRecord(gait_id, f"p{p:03d}", tuple(responses)))
    return records


def synthetic_corpus(n_per_emotion: int = 10, n_ambiguous: int = 2, seed: int = 0, fps: float = 60.0, n_frames: int = 160):
    """Gaits plus ratings: ``(dict gait_id -> Gait, list of RatingRecord, dict gait_id -> intended emotion)``."""
    rng = np.random.default_rng(seed)
    gaits, ratings, intended = {}, [], {}
    for e in EMOTIONS:
        for k in range(n_per_emotion):
            gid = f"{e.name.lower()}_{k:03d}"
            style = jittered_style(e, rng)
            gaits[gid] = synthetic_walk(gid, style, fps=fps, n_frames=n_frames, strike_frame=int(rng.integers(2, 12)), rng=rng, noise=0.002)
            ratings += synthetic_ratings(gid, e, rng)
            intended[gid] = e
    for k in range(n_ambiguous):
        gid = f"ambiguous_{k:03d}"
        e = EMOTIONS[k % len(EMOTIONS)]
        gaits[gid] = synthetic_walk(gid, jittered_style(e, rng), fps=fps, n_frames=n_frames, rng=rng, noise=0.002)
        ratings += synthetic_ratings(gid, None, rng)
    return gaits, ratings, intended


def write_corpus(out_dir, n_per_emotion: int = 10, seed: int = 0) -> Path:
    out = Path(out_dir)
    (out / "gaits").mkdir(parents=True, exist_ok=True)
    gaits, ratings, _ = synthetic_corpus(n_per_emotion, seed=seed)
    for g in gaits.values():
        save_gait(g, out / "gaits" / gait_filename(g.id))
    (out / "ratings.csv").write_text(ratings_to_csv(ratings), encoding="utf-8")
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="write a synthetic gait corpus (gaits/*.json + ratings.csv)")
    ap.add_argument("out_dir")
    ap.add_argument("--per-emotion", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    write_corpus(args.out_dir, args.per_emotion, args.seed)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
