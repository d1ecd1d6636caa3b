"""Command-line entry point: ingest, similarity, synth, run, report."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

from . import adaboost
from .datasets import DatasetBundle, DatasetError, load_canonical, load_motionsense, write_canonical
from .experiments import METHODS, SPLITS, EngineConfig, run_plan, write_results
from .features import subject_signature
from .report import render_csv, render_text, report_table
from .similarity import KINDS, SimilarityConfig, build_matrix
from .synth import PopulationSpec, generate_population

log = logging.getLogger("pershar")

DATASETS = ("unimib", "motionsense", "canonical", "synth")


def read_config(path) -> dict[str, str]:
    """Flat ``key=value`` file; ``#`` starts a comment, dashes in keys become underscores."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, value = (p.strip() for p in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _csv_list(allowed):
    def parse(text):
        items = [t.strip() for t in text.split(",") if t.strip()]
        if not items:
            raise argparse.ArgumentTypeError("empty selection")
        bad = [t for t in items if t not in allowed]
        if bad:
            raise argparse.ArgumentTypeError(f"unknown values {bad}; choose from {list(allowed)}")
        return items
    return parse


def _add_dataset_args(p):
    p.add_argument("--dataset", choices=DATASETS, default="synth")
    p.add_argument("--dataset-dir", type=Path, help="Motion Sense root or directory with windows.csv/subjects.csv")
    p.add_argument("--name", help="dataset name recorded in outputs (canonical input only)")
    p.add_argument("--rate", type=float, default=50.0, help="sampling rate of canonical windows")
    p.add_argument("--seed", type=int, default=0)
    for f in fields(PopulationSpec):
        if f.name == "seed":
            continue
        flag = "--synth-" + f.name.replace("_", "-")
        if f.type in ("bool", bool):
            p.add_argument(flag, type=lambda s: s.lower() in ("1", "true", "yes", "on"), default=f.default)
        else:
            p.add_argument(flag, type=type(f.default), default=f.default)


def _common(p):
    p.add_argument("--config", type=Path, help="key=value file; explicit flags override it")
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pershar", description="Personalized activity recognition experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert a dataset into the canonical CSV pair")
    _add_dataset_args(p)
    _common(p)

    p = sub.add_parser("similarity", help="write subject similarity matrices")
    _add_dataset_args(p)
    _common(p)
    p.add_argument("--sim-kinds", type=_csv_list(KINDS), default=list(KINDS))
    p.add_argument("--gamma", type=float, default=None, help="fixed scale; default is the median heuristic")

    p = sub.add_parser("synth", help="generate a synthetic population as canonical CSV")
    _add_dataset_args(p)
    _common(p)

    p = sub.add_parser("run", help="run PML / PDL / DL over every test subject")
    _add_dataset_args(p)
    _common(p)
    p.add_argument("--methods", type=_csv_list(METHODS), default=list(METHODS))
    p.add_argument("--sim-kinds", type=_csv_list(KINDS), default=list(KINDS))
    p.add_argument("--splits", type=_csv_list(SPLITS), default=list(SPLITS))
    p.add_argument("--hyb-fraction", type=float, default=0.2)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--boost-rounds", type=int, default=adaboost.DEFAULT_ROUNDS)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--learning-rate", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--subjects", type=lambda s: [t for t in s.split(",") if t], default=None,
                   help="comma-separated test subjects (default: all)")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("report", help="render the accuracy summary table of a results CSV")
    p.add_argument("results", type=Path)
    _common(p)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        values = read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, text in values.items():
            if key not in known:
                raise ValueError(f"{args.config}: unknown key {key!r} for '{args.command}'")
            action = known[key]
            defaults[key] = action.type(text) if action.type else text
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def load_dataset(args) -> DatasetBundle:
    kind = args.dataset
    if kind == "synth":
        spec = PopulationSpec(seed=args.seed, **{
            f.name: getattr(args, "synth_" + f.name) for f in fields(PopulationSpec) if f.name != "seed"})
        return generate_population(spec)
    if args.dataset_dir is None:
        raise DatasetError(f"--dataset-dir is required for --dataset {kind}")
    if kind == "motionsense":
        return load_motionsense(args.dataset_dir)
    name = args.name or kind
    return load_canonical(args.dataset_dir / "windows.csv", args.dataset_dir / "subjects.csv",
                          rate=args.rate, name=name)


def write_resolved_config(args, path) -> None:
    with open(path, "w") as fh:
        for key, value in sorted(vars(args).items()):
            if key in ("command", "config", "verbose") or value is None:
                continue
            if isinstance(value, list):
                value = ",".join(map(str, value))
            fh.write(f"{key}={value}\n")


def cmd_ingest(args) -> int:
    bundle = load_dataset(args)
    args.out.mkdir(parents=True, exist_ok=True)
    write_canonical(bundle, args.out / "windows.csv", args.out / "subjects.csv")
    print(f"{bundle.name}: {len(bundle.subjects)} subjects, {len(bundle.windows)} windows, "
          f"{len(bundle.label_set)} labels -> {args.out}")
    return 0


def cmd_synth(args) -> int:
    args.dataset = "synth"
    return cmd_ingest(args)


def cmd_similarity(args) -> int:
    bundle = load_dataset(args)
    args.out.mkdir(parents=True, exist_ok=True)
    signatures = None
    if any(k != "physical" for k in args.sim_kinds):
        signatures = {sid: subject_signature(bundle.windows_of(sid)) for sid in bundle.subject_ids}
    for kind in args.sim_kinds:
        matrix = build_matrix(kind, bundle.subjects, signatures, SimilarityConfig(kind, args.gamma))
        path = args.out / f"similarity_{kind}.csv"
        matrix.to_csv(path)
        gammas = ", ".join(f"{k}={v:.6g}" for k, v in matrix.gamma_used.items())
        print(f"{kind}: {path} (gamma {gammas})")
    return 0


def cmd_run(args) -> int:
    bundle = load_dataset(args)
    args.out.mkdir(parents=True, exist_ok=True)
    config = EngineConfig(
        boost_rounds=args.boost_rounds, gamma=args.gamma, hyb_fraction=args.hyb_fraction, seed=args.seed,
        net={"epochs": args.epochs, "learning_rate": args.learning_rate, "batch_size": args.batch_size},
    )
    write_resolved_config(args, args.out / "config.txt")
    results = run_plan(bundle, args.methods, args.sim_kinds, args.splits, config,
                       subjects=args.subjects, workers=args.workers)
    results_path = args.out / "results.csv"
    write_results(results, results_path)
    text, table_csv = render_text(results), render_csv(results)
    (args.out / "table.txt").write_text(text, encoding="utf-8")
    (args.out / "table.csv").write_text(table_csv, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_report(args) -> int:
    text, table_csv = report_table(args.results)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "table.txt").write_text(text, encoding="utf-8")
    (args.out / "table.csv").write_text(table_csv, encoding="utf-8")
    sys.stdout.write(text)
    return 0


COMMANDS = {"ingest": cmd_ingest, "similarity": cmd_similarity, "synth": cmd_synth,
            "run": cmd_run, "report": cmd_report}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except (OSError, ValueError) as exc:
        print(f"pershar: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (OSError, ValueError, KeyError, FloatingPointError) as exc:
        print(f"pershar: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
