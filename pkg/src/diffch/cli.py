"""``diffch`` command line.

Subcommands write into ``--out`` (default ``.``) and always leave a
``config.json`` snapshot of the resolved configuration next to their
outputs.  Exit codes: 0 success, 2 configuration error, 3 numerical
failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

from . import io
from .channelgen import FEATURE_NAMES
from .config import ExperimentConfig, load_config, write_snapshot
from .errors import ConfigError, DiffchError, FormatError, TrainingError
from .experiment import (
    checkpoint_extra,
    evaluate,
    fit_model,
    generate_dataset,
    restore_split,
    split_dataset,
    sweep_rate,
    sweep_snr,
)

log = logging.getLogger("diffch")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _threads(args) -> int:
    raw = args.threads if args.threads is not None else os.environ.get("DIFFCH_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"bad thread count {raw!r}") from exc
    if n < 1:
        raise ConfigError("thread count must be >= 1")
    return n


def _resolve(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "M", None) is not None:
        if args.M < 1:
            raise ConfigError("-M must be >= 1")
        cfg.M = args.M
    return cfg.validate()


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _need(args, name):
    value = getattr(args, name)
    if value is None:
        raise ConfigError(f"--{name} is required for this command")
    return value


def _load_ds(args, cfg):
    return io.load_dataset(_need(args, "dataset"), tuple(p.name for p in cfg.profiles))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = _resolve(args)
    out = _out(args)
    ds = generate_dataset(cfg)
    io.save_dataset(ds, out / "dataset.bin")
    io.write_features_csv(out / "features.csv", ds)
    write_snapshot(cfg, out)
    print(f"wrote {len(ds)} channels (F={ds.F}, C={ds.num_scenarios}) to {out / 'dataset.bin'}")
    print(f"{'scenario':<16}" + "".join(f"{n:>18}" for n in FEATURE_NAMES))
    for c in range(ds.num_scenarios):
        f = ds.features[ds.labels == c].mean(axis=0)
        name = ds.names[c] if c < len(ds.names) else str(c)
        print(f"{name:<16}" + "".join(f"{v:>18.3f}" for v in f))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _resolve(args)
    ds = split_dataset(_load_ds(args, cfg), cfg.sampling_rate, cfg.seed)
    out = _out(args)
    write_snapshot(cfg, out)
    res = fit_model(ds, cfg, cfg.seed)
    io.save_checkpoint(res.predictor, out / "model.ckpt", checkpoint_extra(ds, cfg, cfg.seed))
    io.write_loss_csv(out / "loss.csv", res.history)
    print(f"trained {len(res.history)} steps; final loss {res.history[-100:].mean():.4f}")
    return EXIT_OK


def cmd_classify(args) -> int:
    cfg = _resolve(args)
    predictor, extra = io.load_checkpoint(_need(args, "checkpoint"))
    ds, sched = restore_split(_load_ds(args, cfg), extra)
    seed = cfg.seed if args.seed is not None or args.config else extra.get("master_seed", cfg.seed)
    out = _out(args)
    write_snapshot(cfg, out)
    ev = evaluate(ds, predictor, sched, cfg.M, seed, threads=_threads(args))
    io.write_results_csv(out / "results.csv", ev.ids, ev.truth, ev.results)
    summary = {"diff_acc": ev.diff_acc, "baseline_acc": ev.baseline_acc, "M": cfg.M, "seed": seed,
               "num_test": len(ev.ids)}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"diffusion accuracy {ev.diff_acc:.4f}  baseline accuracy {ev.baseline_acc:.4f}  ({len(ev.ids)} test)")
    return EXIT_OK


def cmd_sweep_rate(args) -> int:
    cfg = _resolve(args)
    ds = _load_ds(args, cfg)
    out = _out(args)
    write_snapshot(cfg, out)
    rows, runs, failures = sweep_rate(ds, cfg, _threads(args))
    io.write_csv(out / "sweep_rate.csv", ["rate", "diff_acc", "baseline_acc"], rows)
    io.write_csv(out / "sweep_rate_runs.csv", ["rate", "repeat", "diff_acc", "baseline_acc"], runs)
    for rate, diff, base in rows:
        print(f"rate {rate:.2f}  diffusion {diff:.4f}  baseline {base:.4f}")
    for rate, r, msg in failures:
        print(f"rate {rate} repeat {r} failed: {msg}", file=sys.stderr)
    return EXIT_NUMERIC if failures else EXIT_OK


def cmd_sweep_snr(args) -> int:
    cfg = _resolve(args)
    predictor, extra = io.load_checkpoint(_need(args, "checkpoint"))
    ds, sched = restore_split(_load_ds(args, cfg), extra)
    if not math.isclose(ds.sampling_rate, 0.3):
        log.warning("checkpoint was trained at sampling rate %s (the sweep protocol uses 0.3)", ds.sampling_rate)
    seed = cfg.seed if args.seed is not None or args.config else extra.get("master_seed", cfg.seed)
    out = _out(args)
    write_snapshot(cfg, out)
    rows, failures = sweep_snr(ds, predictor, sched, cfg, seed, _threads(args))
    io.write_csv(out / "sweep_snr.csv", ["snr_db", "diff_acc", "baseline_acc"], rows)
    for snr, diff, base in rows:
        print(f"snr {snr:>6} dB  diffusion {diff:.4f}  baseline {base:.4f}")
    for snr, msg in failures:
        print(f"snr {snr} failed: {msg}", file=sys.stderr)
    return EXIT_NUMERIC if failures else EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_checks

    ok = True
    for name, passed, detail in run_checks():
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")
    return EXIT_OK if ok else EXIT_NUMERIC


COMMANDS = {
    "gen": (cmd_gen, "generate a synthetic dataset"),
    "train": (cmd_train, "train the noise predictor on a dataset"),
    "classify": (cmd_classify, "classify the test split with a checkpoint"),
    "sweep-rate": (cmd_sweep_rate, "accuracy versus training sampling rate (retrains per rate)"),
    "sweep-snr": (cmd_sweep_snr, "accuracy versus test SNR for one checkpoint"),
    "selftest": (cmd_selftest, "quick numerical self-checks"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diffch", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="INI config or JSON snapshot")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, help="worker processes (default $DIFFCH_THREADS or 1)")
        p.add_argument("--dataset", help="dataset file written by 'gen'")
        p.add_argument("--checkpoint", help="checkpoint written by 'train'")
        p.add_argument("-M", type=int, help="Monte-Carlo draws per classification")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command][0](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, FormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DiffchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
