"""Acceptance suite: one test per criterion, verdicts summarised at the end.

Criteria 5-7 train real models on the default synthetic dataset (F=64,
300 channels per scenario) with the desk-scale configuration in
``configs/desk.ini``; the whole file takes about 25 minutes on one core.
"""

import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from diffch.channelgen import ScenarioProfile, Tap, features_array, generate_array
from diffch.cli import main
from diffch.config import SWEEP, derive_seed, load_config, snapshot_text
from diffch.diffusion import forward_corrupt, make_schedule, mc_residual, sample_draws
from diffch.experiment import evaluate, fit_model, generate_dataset, noisy_channels, split_dataset
from diffch.gradcheck import gradient_errors, toy_predictor
from diffch.pipeline import classify, posterior_from_eta

DESK = Path(__file__).resolve().parents[1] / "configs" / "desk.ini"
RATES = (0.1, 0.3, 0.5)
SNRS = (0.0, 10.0, 20.0, 30.0)


def monotone_with_one_slip(values, slack=0.02):
    """Non-decreasing except for at most one drop of at most ``slack``."""
    drops = [a - b for a, b in zip(values, values[1:]) if b < a]
    return len(drops) == 0 or (len(drops) == 1 and drops[0] <= slack + 1e-12)


@pytest.fixture(scope="module")
def desk():
    return load_config(DESK)


@pytest.fixture(scope="module")
def trained(desk):
    ds = split_dataset(generate_dataset(desk), 0.5, desk.seed)
    t0 = time.time()
    res = fit_model(ds, desk, desk.seed)
    return ds, res, time.time() - t0


def test_1_gradient_fidelity(verdict):
    t0 = time.time()
    m = toy_predictor(0)
    rng = np.random.default_rng(3)
    x, eps = rng.standard_normal((2, 12)), rng.standard_normal((2, 12))
    errors = gradient_errors(m, x, np.array([0, 2]), np.array([1, 17]), eps)
    worst = max(errors, key=errors.get)
    dt = time.time() - t0
    verdict(1, errors[worst] < 1e-4 and dt < 30 and len(errors) == len(m.params),
            f"{len(errors)} tensors, worst {worst} rel err {errors[worst]:.2e}, {dt:.1f}s")


def test_2_forward_moments(verdict):
    t0 = time.time()
    s = make_schedule(30, 1e-4, 0.02)
    rng = np.random.default_rng(0)
    x0 = np.array([1.5, -0.7, 0.0, 2.0, -3.0])
    ok, worst_z, worst_v = True, 0.0, 0.0
    for t in (1, 15, 30):
        xt = forward_corrupt(np.broadcast_to(x0, (5000, 5)), t, rng.standard_normal((5000, 5)), s)
        ab = s.alpha_bar[t - 1]
        z = np.abs(xt.mean(axis=0) - math.sqrt(ab) * x0) / math.sqrt((1 - ab) / 5000)
        # the process is isotropic, so the variance estimate pools coordinates
        v = abs(xt.var(axis=0).mean() / (1 - ab) - 1)
        ok &= bool(np.all(z < 3) and v < 0.05)
        worst_z, worst_v = max(worst_z, z.max()), max(worst_v, v)
    dt = time.time() - t0
    verdict(2, ok and dt < 10, f"worst mean deviation {worst_z:.2f} se, variance {100 * worst_v:.1f}%, {dt:.2f}s")


def test_3_classifier_algebra(verdict):
    rng = np.random.default_rng(1)
    ok = True
    for _ in range(1000):
        eta = rng.normal(20, 8, rng.integers(2, 7))
        p = posterior_from_eta(eta)
        ok &= abs(p.sum() - 1) < 1e-9 and np.argmax(p) == np.argmin(eta)
        ok &= np.abs(posterior_from_eta(eta + rng.normal(0, 50)) - p).max() < 1e-12
    flat = posterior_from_eta(np.full(4, 3.7))
    ok &= np.abs(flat - 0.25).max() < 1e-15 and int(np.argmax(flat)) == 0
    half = posterior_from_eta([0.0, math.log(2)])
    ok &= np.abs(half - [2 / 3, 1 / 3]).max() < 1e-15
    verdict(3, ok, "1000 random residual vectors, uniform and analytic cases")


def test_4_shared_draws(verdict):
    m = toy_predictor(2)
    s = make_schedule(30, 1e-4, 0.02)
    h = np.random.default_rng(4).standard_normal(12)
    ref = classify(h, m, s, 300, 11)
    orders = ([2, 1, 0], [1, 0, 2], [0, 2, 1], [2, 0, 1])
    same = all(np.array_equal(classify(h, m, s, 300, 11, order=o).eta, ref.eta) for o in orders)
    draws = sample_draws(12, 300, s, np.random.default_rng(11))
    direct = np.array([mc_residual(h, c, draws, m, s) for c in range(3)])
    verdict(4, same and np.array_equal(direct, ref.eta), f"eta {np.round(ref.eta, 3)} under 4 permutations")


def test_5_end_to_end(verdict, trained, desk):
    ds, res, train_s = trained
    t0 = time.time()
    ev = evaluate(ds, res.predictor, res.schedule, 32, desk.seed)
    total = train_s + time.time() - t0
    ok = ev.diff_acc >= 0.90 and ev.diff_acc > ev.baseline_acc and total <= 600
    verdict(5, ok, f"diffusion {ev.diff_acc:.4f} vs baseline {ev.baseline_acc:.4f} "
                   f"on {len(ev.ids)} test channels, {total:.0f}s")


def test_6_trends(verdict, desk):
    data = generate_dataset(desk)
    rate_acc = {r: [] for r in RATES}
    snr_acc = {s: [] for s in SNRS}
    for rep in range(3):
        master = derive_seed(desk.seed, SWEEP, rep)
        for rate in RATES:
            ds = split_dataset(data, rate, master)
            res = fit_model(ds, desk, master)
            rate_acc[rate].append(evaluate(ds, res.predictor, res.schedule, desk.M, master).diff_acc)
            if rate == 0.3:
                for snr in SNRS:
                    H = noisy_channels(ds.H[ds.test_idx], snr, master)
                    snr_acc[snr].append(evaluate(ds, res.predictor, res.schedule, desk.M, master, H_test=H).diff_acc)
    by_rate = [float(np.mean(rate_acc[r])) for r in RATES]
    by_snr = [float(np.mean(snr_acc[s])) for s in SNRS]
    ok = monotone_with_one_slip(by_rate) and monotone_with_one_slip(by_snr)
    verdict(6, ok, "rate " + ", ".join(f"{r}:{a:.3f}" for r, a in zip(RATES, by_rate))
            + " | snr " + ", ".join(f"{s:g}dB:{a:.3f}" for s, a in zip(SNRS, by_snr)))


def test_7_mc_stability(verdict, trained):
    ds, res, _ = trained
    ids = ds.test_idx[np.linspace(0, len(ds.test_idx) - 1, 10).astype(int)]
    X = ds.inputs(ids)
    worst = 0.0
    for x, i in zip(X, ids):
        lo = classify(x, res.predictor, res.schedule, 1024, [7, int(i)]).eta
        hi = classify(x, res.predictor, res.schedule, 4096, [8, int(i)]).eta
        worst = max(worst, float(np.max(np.abs(hi - lo) / np.abs(hi))))
    verdict(7, worst < 0.05, f"max relative change {100 * worst:.2f}% over 10 samples x 3 scenarios")


def test_8_determinism(verdict, tmp_path, desk):
    cfg = replace(desk, per_scenario=40, train=replace(desk.train, steps=60))
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(snapshot_text(cfg))
    digests = []
    for run in ("a", "b"):
        out = tmp_path / run
        codes = [main(["gen", "--config", str(cfg_path), "--out", str(out)]),
                 main(["train", "--config", str(cfg_path), "--dataset", str(out / "dataset.bin"), "--out", str(out)]),
                 main(["classify", "--config", str(cfg_path), "--dataset", str(out / "dataset.bin"),
                       "--checkpoint", str(out / "model.ckpt"), "--out", str(out)])]
        assert codes == [0, 0, 0]
        digests.append([(out / f).read_bytes() for f in ("dataset.bin", "model.ckpt", "loss.csv", "results.csv")])
    same = [x == y for x, y in zip(*digests)]
    verdict(8, all(same), "dataset, checkpoint, loss and result files " + ("identical" if all(same) else str(same)))


def test_9_feature_laws(verdict, desk):
    H = generate_array(desk.profiles[2], 50, 64, 4)
    base = features_array(H)
    gain_err = max(float(np.abs(features_array(g * H)[:, 0] - (base[:, 0] - 20 * math.log10(g))).max())
                   for g in (0.1, 0.5, 3.0, 17.0))
    single = ScenarioProfile(0, (Tap(0, 1.0),), los_k_db=math.inf)
    spread = float(features_array(generate_array(single, 5, 64, 0))[:, 1].max())
    rayleigh = ScenarioProfile(0, tuple(Tap(d, 1.0) for d in range(400)))
    diffuse = 0.01 / 399
    los = ScenarioProfile(0, (Tap(0, 1.0, k_db=math.inf),) + tuple(Tap(d, diffuse) for d in range(1, 400)),
                          los_k_db=math.inf)
    k_ray = features_array(generate_array(rayleigh, 50, 2000, 0))[:, 3].mean()
    k_los = features_array(generate_array(los, 50, 2000, 1))[:, 3].mean()
    ok = gain_err <= 1e-9 and spread == 0.0 and k_los - k_ray >= 20
    verdict(9, ok, f"gain law err {gain_err:.1e} dB, single-tap spread {spread}, "
                   f"mean K Rayleigh {k_ray:.1f} dB vs K=20 profile {k_los:.1f} dB")
