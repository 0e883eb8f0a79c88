"""Train the conditioned noise predictor and classify held-out channels.

Uses the desk-scale settings from configs/desk.ini.  Pass a step count to
shorten the run, e.g. ``python demos/train_and_classify.py 500``.
"""

import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from diffch.config import load_config
from diffch.experiment import evaluate, fit_model, generate_dataset, noisy_channels, split_dataset
from diffch.pipeline import smoothed

cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "desk.ini")
if len(sys.argv) > 1:
    cfg = replace(cfg, train=replace(cfg.train, steps=int(sys.argv[1])))

ds = split_dataset(generate_dataset(cfg), cfg.sampling_rate, cfg.seed)
print(f"training on {len(ds.train_idx)} channels for {cfg.train.steps} steps")
t0 = time.time()
res = fit_model(ds, cfg, cfg.seed)
curve = smoothed(res.history, 100)
print(f"done in {time.time() - t0:.0f}s; smoothed loss {curve[0]:.1f} -> {curve[-1]:.1f}")

ev = evaluate(ds, res.predictor, res.schedule, cfg.M, cfg.seed)
print(f"\ndiffusion classifier  {ev.diff_acc:.3f}")
print(f"feature baseline      {ev.baseline_acc:.3f}")

print("\na few test channels (residual per scenario, posterior)")
for r, y in list(zip(ev.results, ev.truth))[::90]:
    print(f"  true {y}  eta {np.round(r.eta, 2)}  posterior {np.round(r.posterior, 3)}  -> {r.label}")

print("\naccuracy with LS estimation noise on the test channels")
for snr in (0.0, 10.0, 20.0):
    H = noisy_channels(ds.H[ds.test_idx], snr, cfg.seed)
    e = evaluate(ds, res.predictor, res.schedule, cfg.M, cfg.seed, H_test=H)
    print(f"  {snr:4.0f} dB  diffusion {e.diff_acc:.3f}  baseline {e.baseline_acc:.3f}")
