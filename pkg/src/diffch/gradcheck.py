"""Central finite-difference check of the noise predictor's gradients."""

from __future__ import annotations

import numpy as np

from . import numcore as nc
from .model import ModelConfig, NoisePredictor, init_params
from .numcore import Tape


def toy_predictor(seed: int = 0, perturb: float = 0.3) -> NoisePredictor:
    """Small model (input 12, width 8, two blocks) with every parameter
    randomly perturbed so no path is trivially zero."""
    cfg = ModelConfig(input_dim=12, num_scenarios=3, T=30, hidden_size=8, num_blocks=2,
                      cond_hidden=16, label_dim=8, time_dim=8, num_cond_tokens=3, cond_mlp_depth=3)
    model = init_params(cfg, seed)
    rng = np.random.default_rng(seed + 1)
    for p in model.params.values():
        p.data += perturb * rng.standard_normal(p.shape)
    return model


def gradient_errors(model: NoisePredictor, x, c, t, eps, h: float = 1e-5) -> dict[str, float]:
    """Per-parameter max relative error of analytic vs. numeric gradients of
    ``sum ||predict(x, c, t) - eps||^2``.

    Relative error of a coordinate is ``|g - n| / max(|g|, |n|, 1e-10)``;
    the tiny floor only matters for coordinates that are exactly zero.
    """
    names = list(model.params)

    def value():
        return float(nc.sq_norm_rows(model.forward(x, c, t) - eps).sum().data)

    with Tape() as tape:
        out = nc.sq_norm_rows(model.forward(x, c, t) - eps).sum()
    grads = tape.backward(out, [model.params[n] for n in names])
    errors = {}
    for name, g in zip(names, grads):
        arr = model.params[name].data
        flat = arr.reshape(-1)
        num = np.empty(flat.size)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            fp = value()
            flat[i] = old - h
            fm = value()
            flat[i] = old
            num[i] = (fp - fm) / (2 * h)
        g = g.reshape(-1)
        denom = np.maximum(np.maximum(np.abs(g), np.abs(num)), 1e-10)
        errors[name] = float((np.abs(g - num) / denom).max())
    return errors
