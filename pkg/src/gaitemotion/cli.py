"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
Machine-readable results go to stdout (or ``--out``); diagnostics go to
stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import classifier, features, gea, simulator, skeleton
from .errors import DataError

log = logging.getLogger("gaitemotion")

CONFIG_ENV = "GAITEMOTION_CONFIG"

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _gait_paths(paths) -> list:
    out = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            out.extend(sorted(p.glob("*.json")))
        else:
            out.append(p)
    return out


def load_gait_library(paths) -> dict:
    gaits = {}
    for path in _gait_paths(paths):
        g = skeleton.load_gait(path)
        if g.id in gaits:
            raise DataError(f"duplicate gait id {g.id!r} in {path}")
        gaits[g.id] = g
    return gaits


def _write(text: str, out) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _setting(args, config: dict, name: str, default=None, cast=None):
    value = getattr(args, name, None)
    if value is None:
        value = config.get(name, default)
    if value is not None and cast is not None:
        value = cast(value)
    return value


def _labeled_matrix(features_csv, assoc_path):
    ids, X, _ = features.read_features_csv(Path(features_csv).read_text(encoding="utf-8"))
    assoc = gea.load_gea(assoc_path)
    rows = [k for k, gid in enumerate(ids) if gid in assoc.labels]
    if not rows:
        raise DataError("no feature rows belong to labeled gaits")
    labels = [assoc.labels[ids[k]] for k in rows]
    return X[rows], labels


# --------------------------------------------------------------------------
# commands


def cmd_ingest(args, config):
    if bool(args.bvh) == bool(args.gait):
        raise UsageError("ingest needs exactly one of --bvh or --gait")
    if args.bvh:
        if not args.joint_map:
            raise UsageError("--bvh requires --joint-map")
        scale = _setting(args, config, "scale", skeleton.BVH_DEFAULT_SCALE, float)
        g = skeleton.import_bvh(args.bvh, skeleton.load_joint_map(args.joint_map), scale=scale, gait_id=args.id)
    else:
        g = skeleton.load_gait(args.gait)
    _write(skeleton.dumps_gait(g), args.out)
    log.info("ingested gait %s: %d frames at %g fps", g.id, g.n_frames, g.fps)
    return EXIT_OK


def cmd_features(args, config):
    gaits = load_gait_library(args.gaits)
    if not gaits:
        raise DataError("no gaits found")
    rows = []
    for gid in sorted(gaits):
        v = features.extract_features(gaits[gid])
        if v.flags:
            log.warning("gait %s: %s", gid, ", ".join(sorted(v.flags)))
        rows.append(v)
    labels = None
    if args.gea:
        assoc = gea.load_gea(args.gea)
        labels = {gid: e.name for gid, e in assoc.labels.items()}
    _write(features.features_to_csv(rows, labels), args.out)
    return EXIT_OK


def _distribution_text(assoc) -> str:
    dist = gea.emotion_distribution(assoc)
    return "".join(f"{e.name} {100.0 * dist[e]:.2f}%\n" for e in gea.EMOTIONS)


def cmd_build_gea(args, config):
    theta = _setting(args, config, "theta", gea.DEFAULT_THETA, float)
    ratings = gea.load_ratings(args.ratings)
    known = load_gait_library(args.gaits).keys() if args.gaits else None
    assoc = gea.build_gea(ratings, theta, known)
    gea.save_gea(assoc, args.out)
    log.info("%d gaits labeled, %d discarded (theta=%g)", len(assoc.labels), len(assoc.discarded), theta)
    sys.stdout.write(_distribution_text(assoc))
    return EXIT_OK


def _training_config(args, config) -> classifier.TrainingConfig:
    seed = _setting(args, config, "seed", None, int)
    if seed is None:
        raise UsageError("a seed is required (--seed or config)")
    return classifier.TrainingConfig(
        C=_setting(args, config, "C", 1.0, float),
        gamma=_setting(args, config, "gamma", 1.0 / features.N_FEATURES, float),
        tol=_setting(args, config, "tol", 1e-3, float),
        seed=seed,
    )


def cmd_train(args, config):
    cfg = _training_config(args, config)
    X, labels = _labeled_matrix(args.features, args.gea)
    bounds = features.fit_normalization(X)
    model = classifier.train(features.normalize(X, bounds), labels, cfg, bounds)
    classifier.save_model(model, args.out)
    log.info("trained %d machines on %d gaits", len(model.machines), len(labels))
    return EXIT_OK


def cmd_predict(args, config):
    model = classifier.load_model(args.model)
    v = features.extract_features(skeleton.load_gait(args.gait))
    emotion, scores = classifier.predict_raw(model, v.as_array())
    lines = [emotion.name] + [f"{e.name} {scores[e]!r}" for e in model.classes]
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_crossval(args, config):
    cfg = _training_config(args, config)
    k = _setting(args, config, "k", 10, int)
    X, labels = _labeled_matrix(args.features, args.gea)
    accuracy, confusion = classifier.cross_validate(X, labels, k, cfg)
    report = confusion.to_csv() + f"# accuracy {accuracy!r} folds {k} samples {len(labels)}\n"
    _write(report, args.out)
    sys.stderr.write(f"accuracy {100.0 * accuracy:.2f}%\n")
    return EXIT_OK


def cmd_simulate(args, config):
    doc = json.loads(Path(args.scenario).read_text(encoding="utf-8")) if args.scenario else {}
    doc = {**config, **doc}
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.duration is not None:
        doc["duration"] = args.duration
    if "seed" not in doc:
        raise UsageError("a seed is required (scenario, config, or --seed)")
    agents, cfg = simulator.scenario_from_dict(doc)
    assoc = gea.load_gea(args.gea)
    gaits = load_gait_library(args.gaits)
    frames = simulator.simulate(agents, assoc, gaits, cfg)
    n = simulator.export_frames(frames, args.out, args.format)
    log.info("wrote %d frames for %d agents", n, len(agents))
    return EXIT_OK


def cmd_stats(args, config):
    assoc = gea.load_gea(args.gea)
    names = [e.name for e in gea.EMOTIONS]
    if args.ratings:
        corr, defined = gea.emotion_correlation(gea.load_ratings(args.ratings), raw=args.raw)
    else:
        if args.raw:
            raise UsageError("--raw needs --ratings")
        data = np.array([assoc.mean_responses[g] for g in sorted(assoc.mean_responses)])
        if len(data) < 2:
            raise DataError("correlation needs at least two rated gaits")
        corr, defined = gea.correlation_matrix(data)
    lines = ["emotion," + ",".join(names)]
    for a, name in enumerate(names):
        cells = [f"{corr[a, b]:.3f}" if defined[a, b] else "undefined" for b in range(len(names))]
        lines.append(name + "," + ",".join(cells))
    text = "\n".join(lines) + "\n\n" + _distribution_text(assoc)
    _write(text, args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="gaitemotion", description="gait emotion analysis and expressive agent simulation")
    ap.add_argument("--config", help=f"JSON config with per-command sections (default: ${CONFIG_ENV})")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("ingest", help="convert BVH or validate a native gait")
    p.add_argument("--bvh")
    p.add_argument("--joint-map")
    p.add_argument("--scale", type=float, help="file units to meters (default 0.01)")
    p.add_argument("--id")
    p.add_argument("--gait")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("features", help="feature table for gaits")
    p.add_argument("--gaits", nargs="+", required=True, help="gait files or directories")
    p.add_argument("--gea", help="association file; adds a label column")
    p.add_argument("--out")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("build-gea", help="association from ratings")
    p.add_argument("--ratings", required=True)
    p.add_argument("--theta", type=float)
    p.add_argument("--gaits", nargs="+", help="check ratings against these gaits")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_gea)

    for name, func, help_ in (("train", cmd_train, "train the classifier"), ("crossval", cmd_crossval, "k-fold cross-validation")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--features", required=True)
        p.add_argument("--gea", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--C", type=float)
        p.add_argument("--gamma", type=float)
        p.add_argument("--tol", type=float)
        if name == "crossval":
            p.add_argument("--k", type=int)
            p.add_argument("--out")
        else:
            p.add_argument("--out", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("predict", help="perceived emotion of one gait")
    p.add_argument("--model", required=True)
    p.add_argument("--gait", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", help="run a scenario and export frames")
    p.add_argument("--scenario", required=True)
    p.add_argument("--gea", required=True)
    p.add_argument("--gaits", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    p.add_argument("--seed", type=int)
    p.add_argument("--duration", type=float)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("stats", help="emotion correlations and distribution")
    p.add_argument("--gea", required=True)
    p.add_argument("--ratings", help="compute correlations from ratings instead of stored means")
    p.add_argument("--raw", action="store_true", help="correlate participant rows rather than per-gait means")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)
    return ap


def _load_config(path) -> dict:
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"config {path}: {exc.msg} (line {exc.lineno})") from None
    if not isinstance(doc, dict):
        raise DataError(f"config {path}: expected an object")
    return doc


def run(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        if not argv:
            parser.print_usage(sys.stderr)
            sys.stderr.write("usage error: no command given\n")
            return EXIT_USAGE
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s: %(message)s",
            stream=sys.stderr,
        )
        if args.command is None:
            raise UsageError("no command given")
        config = _load_config(args.config or os.environ.get(CONFIG_ENV))
        section = config.get(args.command, {})
        return args.func(args, section)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        sys.stderr.write(f"data error: {exc}\n")
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        sys.stderr.write(f"internal error: {type(exc).__name__}: {exc}\n")
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
