"""Command-line front end.

Subcommands: train, eval, gradcheck, oracle, compare, curves, gen-data.
Exit codes: 0 success, 1 verification failure, 2 config error, 3 runtime
abort. Every output lands under --out, plus a manifest.txt listing the
artifacts the invocation produced.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import recall, verify
from .config import format_config, parse_config
from .engine import set_default_dtype
from .errors import AmnetError, ConfigError, TrainingAborted
from .training import (
    PRECISIONS,
    TrainConfig,
    evaluate,
    load_checkpoint,
    run_experiment,
)

SWEEP_VARIANTS = ("fullmatrix", "rowcol", "gated")


def _apply_seed(config: TrainConfig, seed: int | None) -> TrainConfig:
    if seed is None:
        return config
    return replace(config, init_seed=seed, shuffle_seed=seed + 1, data_seed=seed + 2)


def _write_manifest(out: Path, paths: list[Path]) -> None:
    listing = "\n".join(str(p.relative_to(out)) for p in paths)
    (out / "manifest.txt").write_text(listing + "\n", encoding="utf-8")


def _echo_config(config: TrainConfig, out: Path) -> Path:
    path = out / "config_effective.cfg"
    path.write_text(format_config(config), encoding="utf-8")
    return path


def _load_run_config(args) -> TrainConfig:
    config = parse_config(args.config, args.override)
    return _apply_seed(config, args.seed)


def cmd_train(args) -> int:
    config = _load_run_config(args)
    out = Path(args.out) if args.out else None
    artifacts = []
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        artifacts.append(_echo_config(config, out))
    result = run_experiment(config, out_dir=out, log=print)
    if result.converged:
        print(f"converged at epoch {result.epochs_to_converge}")
    else:
        print(f"not converged within {config.max_epochs} epochs")
    print(f"test accuracy {result.test.accuracy:.4f}  test loss {result.test.loss:.4f}")
    if out is not None:
        artifacts.append(out / "metrics.csv")
        for name in ("checkpoint_best.amn", "checkpoint_final.amn"):
            if (out / name).exists():
                artifacts.append(out / name)
        _write_manifest(out, artifacts)
    return 0


def cmd_eval(args) -> int:
    config = _load_run_config(args)
    set_default_dtype(PRECISIONS[config.precision])
    params, epoch = load_checkpoint(args.checkpoint, config)
    splits = dict(zip(("train", "val", "test"), recall.generate_splits(
        config.length, (config.train_size, config.val_size, config.test_size),
        config.data_seed)))
    record = evaluate(params, splits[args.split], config, epoch)
    print(f"{args.split}: loss {record.loss:.6f}  accuracy {record.accuracy:.4f} "
          f"(checkpoint epoch {epoch})")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "eval.csv"
        path.write_text(
            "epoch,split,loss,accuracy,wall_time_s\n" + record.csv_row() + "\n",
            encoding="utf-8")
        _write_manifest(out, [_echo_config(config, out), path])
    return 0


def cmd_gradcheck(args) -> int:
    rows = verify.gradcheck_suite()
    report = verify.format_gradcheck_report(rows)
    print(report)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "gradcheck_report.txt"
        path.write_text(report + "\n", encoding="utf-8")
        _write_manifest(out, [path])
    return 0 if all(r.passed for r in rows) else 1


def cmd_oracle(args) -> int:
    rows = verify.oracle_suite()
    report = verify.format_oracle_report(rows)
    print(report)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "oracle_report.txt"
        path.write_text(report + "\n", encoding="utf-8")
        _write_manifest(out, [path])
    return 0 if all(r.passed for r in rows) else 1


def _compare_worker(task) -> dict:
    cfg_path, overrides, seed, run_dir = task
    config = _apply_seed(parse_config(cfg_path, overrides), seed)
    label = Path(cfg_path).stem
    try:
        result = run_experiment(config, out_dir=run_dir)
    except TrainingAborted as exc:
        return dict(model=label, length=config.length, epochs=f"aborted ({exc})",
                    accuracy=float("nan"))
    if result.converged:
        epochs = str(result.epochs_to_converge)
    else:
        epochs = f"not converged ({config.max_epochs})"
    return dict(model=label, length=config.length, epochs=epochs,
                accuracy=result.test.accuracy)


def cmd_compare(args) -> int:
    config_dir = Path(args.configs)
    files = sorted(config_dir.glob("*.cfg"))
    if not files:
        raise ConfigError(f"no .cfg files found in {config_dir}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(str(f), args.override, args.seed, str(out / f.stem)) for f in files]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_compare_worker, tasks))
    else:
        rows = [_compare_worker(t) for t in tasks]

    csv_path = out / "results.csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("model,length,epochs_to_converge,test_accuracy\n")
        for row in rows:
            fh.write(f"{row['model']},{row['length']},{row['epochs']},"
                     f"{row['accuracy']!r}\n")

    widths = (max(len(r["model"]) for r in rows) + 2, 8, 24, 14)
    lines = [f"{'model':<{widths[0]}}{'length':<{widths[1]}}"
             f"{'epochs':<{widths[2]}}{'test_accuracy':<{widths[3]}}"]
    for row in rows:
        lines.append(f"{row['model']:<{widths[0]}}{row['length']:<{widths[1]}}"
                     f"{row['epochs']:<{widths[2]}}{row['accuracy']:<{widths[3]}.4f}")
    table = "\n".join(lines)
    txt_path = out / "results.txt"
    txt_path.write_text(table + "\n", encoding="utf-8")
    print(table)
    artifacts = [csv_path, txt_path]
    artifacts += [out / f.stem / "metrics.csv" for f in files
                  if (out / f.stem / "metrics.csv").exists()]
    _write_manifest(out, artifacts)
    return 0


def cmd_curves(args) -> int:
    base = _load_run_config(args)
    if args.sweep == "variant":
        runs = [(f"curves_variant_{v}", replace(base, arch="weinet", variant=v))
                for v in SWEEP_VARIANTS]
    else:
        runs = [
            ("curves_router_off", replace(base, arch="weinet",
                                          router_enabled=False, k=1)),
            ("curves_router_on_k2", replace(base, arch="weinet",
                                            router_enabled=True, k=2)),
        ]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = []
    for name, config in runs:
        print(f"running {name} ...")
        result = run_experiment(config, out_dir=out / name)
        path = out / f"{name}.csv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,val_accuracy\n")
            for rec in result.history:
                if rec.split == "val":
                    fh.write(f"{rec.epoch},{rec.accuracy!r}\n")
        artifacts.append(path)
    _write_manifest(out, artifacts)
    return 0


def cmd_gen_data(args) -> int:
    try:
        sizes = tuple(int(s) for s in args.sizes.split(","))
    except ValueError:
        raise ConfigError(f"--sizes must be three comma-separated ints, got {args.sizes!r}")
    if len(sizes) != 3:
        raise ConfigError(f"--sizes must be three comma-separated ints, got {args.sizes!r}")
    splits = recall.generate_splits(args.length, sizes, args.seed,
                                    pair_count=args.pairs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = []
    for split in splits:
        path = out / f"{split.role}.txt"
        recall.write_cache(split, path)
        artifacts.append(path)
        print(f"{path}: {len(split)} examples (L={split.length}, R={split.pair_count})")
    _write_manifest(out, artifacts)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amnet",
        description="Recall-benchmark harness for memory-augmented recurrent cells.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="config file path")
        p.add_argument("--seed", type=int, default=None,
                       help="base seed overriding init/shuffle/data seeds")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--override", action="append", default=[],
                       metavar="SECTION.KEY=VALUE", help="config override (repeatable)")

    p = sub.add_parser("train", help="train one model per the config")
    add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    add_common(p)
    p.add_argument("--checkpoint", required=True, help="checkpoint file")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck",
                       help="finite-difference check of every family/variant")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("oracle",
                       help="closed-form unroll and scalar-degeneracy oracles")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("compare", help="run every config in a directory, tabulate")
    p.add_argument("configs", help="directory of .cfg files")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--override", action="append", default=[],
                   metavar="SECTION.KEY=VALUE")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("curves", help="per-epoch validation-accuracy CSVs for a sweep")
    add_common(p)
    p.add_argument("--sweep", choices=("variant", "router"), required=True)
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("gen-data", help="write recall split cache files")
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--sizes", required=True, metavar="TRAIN,VAL,TEST")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--pairs", type=int, default=None,
                   help="explicit pair count for non-nominal lengths")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TrainingAborted as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return 3
    except AmnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
