"""Fast numerical checks run by ``diffch selftest``."""

from __future__ import annotations

import math

import numpy as np

from .diffusion import forward_corrupt, make_schedule, sample_draws, mc_residual
from .gradcheck import gradient_errors, toy_predictor
from .pipeline import classify, posterior_from_eta


def _gradients():
    m = toy_predictor(0)
    rng = np.random.default_rng(3)
    x, eps = rng.standard_normal((2, 12)), rng.standard_normal((2, 12))
    worst = max(gradient_errors(m, x, np.array([0, 2]), np.array([1, 17]), eps).values())
    return worst < 1e-4, f"max relative error {worst:.2e}"


def _moments():
    s = make_schedule()
    rng = np.random.default_rng(0)
    x0 = np.array([1.0, -2.0, 0.5])
    ok, worst = True, 0.0
    for t in (1, s.T // 2, s.T):
        xt = forward_corrupt(np.broadcast_to(x0, (5000, 3)), t, rng.standard_normal((5000, 3)), s)
        ab = s.alpha_bar[t - 1]
        z = np.abs(xt.mean(axis=0) - math.sqrt(ab) * x0) / math.sqrt((1 - ab) / 5000)
        v = abs(xt.var(axis=0).mean() / (1 - ab) - 1)
        ok &= bool(np.all(z < 3) and v < 0.05)
        worst = max(worst, float(v))
    return ok, f"worst variance deviation {worst:.3f}"


def _algebra():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        eta = rng.exponential(3.0, rng.integers(1, 6))
        p = posterior_from_eta(eta)
        if abs(p.sum() - 1) > 1e-9 or np.argmax(p) != np.argmin(eta):
            return False, f"failed on {eta}"
        if np.abs(posterior_from_eta(eta + 7.3) - p).max() > 1e-12:
            return False, "not shift invariant"
    return True, "1000 random residual vectors"


def _shared_draws():
    s = make_schedule()
    centers = np.array([[0.0] * 4, [1.0] * 4, [-1.0] * 4])

    def stub(x, c, t):
        return 0.2 * (x - centers[c])
    h = np.full(4, 0.3)
    a = classify(h, stub, s, 64, 5, num_scenarios=3).eta
    b = classify(h, stub, s, 64, 5, num_scenarios=3, order=[2, 0, 1]).eta
    draws = sample_draws(4, 64, s, np.random.default_rng(5))
    direct = np.array([mc_residual(h, c, draws, stub, s) for c in range(3)])
    return bool(np.array_equal(a, b) and np.array_equal(a, direct)), "permuted scenario order"


def run_checks():
    for name, fn in (("gradients", _gradients), ("forward moments", _moments),
                     ("posterior algebra", _algebra), ("shared draws", _shared_draws)):
        ok, detail = fn()
        yield name, bool(ok), detail
