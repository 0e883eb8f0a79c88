"""Experiment stages shared by the command line and the acceptance suite.

Every stage takes the master seed and derives its own stream with
:func:`diffch.config.derive_seed`:

* dataset ``(seed, DATA)``;
* train/test split ``(seed, SPLIT)``;
* training ``(seed, TRAIN)``;
* classification ``(seed, CLASSIFY)``, with test sample ``i`` drawing from
  ``[classify_seed, i]``;
* LS noise ``(seed, NOISE)``.  The same unit noise is reused for every SNR
  and only its scale changes;
* sweep repeat ``r`` runs all of the above under master ``(seed, SWEEP, r)``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .channelgen import Dataset, FeatureStats, features_array, make_dataset, split
from .config import CLASSIFY, DATA, NOISE, SPLIT, SWEEP, TRAIN, ExperimentConfig, derive_seed
from .diffusion import DiffusionSchedule, make_schedule
from .errors import DiffchError, FormatError
from .model import NoisePredictor
from .pipeline import (
    ClassificationResult,
    TrainResult,
    accuracy,
    classify_many,
    fit_baseline,
    train,
)

log = logging.getLogger(__name__)


def pmap(fn, jobs: list, threads: int = 1) -> list:
    """``[fn(j) for j in jobs]``, optionally across worker processes.

    Results come back in job order whatever the completion order.
    """
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


def generate_dataset(cfg: ExperimentConfig) -> Dataset:
    return make_dataset(cfg.profiles, cfg.per_scenario, cfg.F, derive_seed(cfg.seed, DATA))


def split_dataset(ds: Dataset, rate: float, seed: int) -> Dataset:
    return split(ds, rate, derive_seed(seed, SPLIT))


def fit_model(ds: Dataset, cfg: ExperimentConfig, seed: int) -> TrainResult:
    return train(ds, replace(cfg.train, seed=derive_seed(seed, TRAIN)))


def checkpoint_extra(ds: Dataset, cfg: ExperimentConfig, seed: int) -> dict:
    tc = replace(cfg.train, seed=derive_seed(seed, TRAIN))
    return {
        "master_seed": int(seed),
        "schedule": {"T": tc.T, "beta_start": tc.beta_start, "beta_end": tc.beta_end},
        "stats": {"mean": ds.stats.mean.tolist(), "std": ds.stats.std.tolist()},
        "split": {"rate": ds.sampling_rate, "seed": derive_seed(seed, SPLIT)},
        "train": tc.to_dict(),
        "F": ds.F,
        "num_scenarios": ds.num_scenarios,
    }


def restore_split(ds: Dataset, extra: dict) -> tuple[Dataset, DiffusionSchedule]:
    """Re-create the training split recorded in a checkpoint and check it."""
    try:
        if ds.F != extra["F"] or ds.num_scenarios != extra["num_scenarios"]:
            raise FormatError("dataset shape does not match the checkpoint")
        ds = split(ds, extra["split"]["rate"], extra["split"]["seed"])
        stats = FeatureStats(np.array(extra["stats"]["mean"]), np.array(extra["stats"]["std"]))
        sched = make_schedule(**extra["schedule"])
    except KeyError as exc:
        raise FormatError(f"checkpoint lacks {exc}") from exc
    if not (np.array_equal(stats.mean, ds.stats.mean) and np.array_equal(stats.std, ds.stats.std)):
        raise FormatError("checkpoint was trained on a different dataset")
    return replace(ds, stats=stats), sched


def noisy_channels(H: np.ndarray, snr_db: float, seed: int) -> np.ndarray:
    """LS-noisy copy of every row of ``H``; ``+inf`` returns ``H`` itself."""
    if snr_db == math.inf:
        return H
    rng = np.random.default_rng(derive_seed(seed, NOISE))
    unit = (rng.standard_normal(H.shape) + 1j * rng.standard_normal(H.shape)) / math.sqrt(2.0)
    sigma = np.sqrt((np.abs(H) ** 2).mean(axis=1) * 10.0 ** (-snr_db / 10.0))
    return H + sigma[:, None] * unit


@dataclass
class Evaluation:
    ids: np.ndarray
    truth: np.ndarray
    results: list[ClassificationResult]
    baseline_pred: np.ndarray

    @property
    def diff_acc(self) -> float:
        return accuracy([r.label for r in self.results], self.truth)

    @property
    def baseline_acc(self) -> float:
        return accuracy(self.baseline_pred, self.truth)


def _classify_chunk(job):
    X, ids, predictor, sched, M, seed, C = job
    return classify_many(X, predictor, sched, M, seed, ids, C)


def evaluate(ds: Dataset, predictor: NoisePredictor, sched: DiffusionSchedule, M: int, seed: int,
             H_test: np.ndarray | None = None, threads: int = 1) -> Evaluation:
    """Diffusion and baseline predictions on the test split.

    ``H_test`` replaces the clean test channels (for the SNR sweep).  The
    baseline is refit on the clean training features.
    """
    te, tr = ds.test_idx, ds.train_idx
    H = ds.H[te] if H_test is None else H_test
    X = ds.inputs(H=H) if H_test is not None else ds.inputs(te)
    cseed = derive_seed(seed, CLASSIFY)
    chunks = np.array_split(np.arange(len(te)), max(1, min(threads, len(te))))
    jobs = [(X[c], te[c], predictor, sched, M, cseed, ds.num_scenarios) for c in chunks if len(c)]
    results = [r for part in pmap(_classify_chunk, jobs, threads) for r in part]

    fs_train = ds.stats.apply(ds.features[tr])
    base = fit_baseline(fs_train, ds.labels[tr], ds.num_scenarios)
    feats = ds.features[te] if H_test is None else features_array(H)
    return Evaluation(te, ds.labels[te], results, base.predict(ds.stats.apply(feats)))


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def _rate_job(job):
    cfg, ds, rate, master = job
    sub = split_dataset(ds, rate, master)
    res = fit_model(sub, cfg, master)
    ev = evaluate(sub, res.predictor, res.schedule, cfg.M, master)
    return ev.diff_acc, ev.baseline_acc


def sweep_rate(ds: Dataset, cfg: ExperimentConfig, threads: int = 1):
    """Retrain per (rate, repeat); returns ``(rows, runs, failures)``.

    ``rows`` holds ``(rate, mean diff_acc, mean baseline_acc)`` for every
    rate whose repeats all succeeded.
    """
    keys = [(rate, r) for rate in cfg.rates for r in range(cfg.repeats)]
    jobs = [(cfg, ds, rate, derive_seed(cfg.seed, SWEEP, r)) for rate, r in keys]
    runs, failures = [], []
    for (rate, r), out in zip(keys, pmap(_safe(_rate_job), jobs, threads)):
        if isinstance(out, str):
            failures.append((rate, r, out))
        else:
            runs.append((rate, r, *out))
    rows = []
    for rate in cfg.rates:
        accs = [run[2:] for run in runs if run[0] == rate]
        if len(accs) == cfg.repeats:
            rows.append((rate, float(np.mean([a[0] for a in accs])), float(np.mean([a[1] for a in accs]))))
    return rows, runs, failures


def _snr_job(job):
    ds, predictor, sched, M, seed, snr = job
    H = noisy_channels(ds.H[ds.test_idx], snr, seed)
    ev = evaluate(ds, predictor, sched, M, seed, H_test=None if snr == math.inf else H)
    return ev.diff_acc, ev.baseline_acc


def sweep_snr(ds: Dataset, predictor: NoisePredictor, sched: DiffusionSchedule, cfg: ExperimentConfig,
              seed: int, threads: int = 1):
    """One checkpoint, test noise at every SNR; returns ``(rows, failures)``."""
    jobs = [(ds, predictor, sched, cfg.M, seed, snr) for snr in cfg.snrs]
    rows, failures = [], []
    for snr, out in zip(cfg.snrs, pmap(_safe(_snr_job), jobs, threads)):
        if isinstance(out, str):
            failures.append((snr, out))
        else:
            rows.append((snr, *out))
    return rows, failures


class _safe:
    """Picklable wrapper turning library errors into a message string."""

    def __init__(self, fn):
        self.fn = fn

    def __call__(self, job):
        try:
            return self.fn(job)
        except (DiffchError, ValueError, FloatingPointError) as exc:
            return f"{type(exc).__name__}: {exc}"
