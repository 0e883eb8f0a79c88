"""Forward corruption, Monte-Carlo noise residuals and ancestral sampling.

Step indices are 1-based throughout: ``t`` ranges over ``1..T`` and
``alpha_bar[t - 1]`` is the cumulative product up to step ``t``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, ContractError, DimensionError

# predictor(x (n, D), c (n,), t (n,)) -> predicted noise (n, D)
Predictor = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DiffusionSchedule:
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    posterior_var: np.ndarray

    @property
    def T(self) -> int:
        return len(self.beta)

    def ab(self, t) -> np.ndarray:
        """Cumulative ``alpha_bar`` at (1-based) step(s) ``t``."""
        return self.alpha_bar[np.asarray(t) - 1]


@dataclass(frozen=True)
class NoiseDraw:
    t: int
    eps: np.ndarray


def make_schedule(T: int = 30, beta_start: float = 1e-4, beta_end: float = 0.02) -> DiffusionSchedule:
    """Linear beta schedule over ``T`` steps."""
    if T < 1:
        raise ConfigError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ConfigError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    beta = np.linspace(beta_start, beta_end, T) if T > 1 else np.array([beta_start])
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    prev = np.concatenate([[1.0], alpha_bar[:-1]])
    posterior_var = (1.0 - prev) / (1.0 - alpha_bar) * beta
    return DiffusionSchedule(beta, alpha, alpha_bar, posterior_var)


def _check_t(t, T):
    t = np.asarray(t)
    if np.any(t < 1) or np.any(t > T):
        raise ContractError(f"diffusion step out of range 1..{T}: {t}")


def forward_corrupt(x0, t, eps, schedule: DiffusionSchedule) -> np.ndarray:
    """``sqrt(ab_t) x0 + sqrt(1 - ab_t) eps``; ``t`` may be a per-row vector."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape[-1] != eps.shape[-1]:
        raise DimensionError(f"x0 and eps differ in shape: {x0.shape} vs {eps.shape}")
    _check_t(t, schedule.T)
    ab = schedule.ab(t)
    if np.ndim(ab) == 1:
        ab = ab[:, None]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def sample_draws(dim: int, M: int, schedule: DiffusionSchedule, rng: np.random.Generator) -> list[NoiseDraw]:
    """``M`` independent (t, eps) pairs, t uniform on ``1..T``."""
    ts = rng.integers(1, schedule.T + 1, size=M)
    eps = rng.standard_normal((M, dim))
    return [NoiseDraw(int(t), e) for t, e in zip(ts, eps)]


def mc_residual(h, c: int, draws: Sequence[NoiseDraw], predictor: Predictor,
                schedule: DiffusionSchedule, chunk: int = 256) -> float:
    """Mean over ``draws`` of ``||predictor(h_t, c, t) - eps||^2``.

    Evaluated in fixed-size chunks so the result does not depend on how the
    caller orders scenarios.
    """
    if len(draws) == 0:
        raise ContractError("mc_residual needs at least one draw")
    h = np.asarray(h, dtype=np.float64).reshape(-1)
    ts = np.array([d.t for d in draws])
    eps = np.stack([d.eps for d in draws])
    if eps.shape[1] != h.shape[0]:
        raise DimensionError(f"draw dimension {eps.shape[1]} != input dimension {h.shape[0]}")
    total = 0.0
    for lo in range(0, len(ts), chunk):
        tt, ee = ts[lo:lo + chunk], eps[lo:lo + chunk]
        xt = forward_corrupt(h[None, :], tt, ee, schedule)
        pred = np.asarray(predictor(xt, np.full(len(tt), c), tt))
        if pred.shape != ee.shape:
            raise DimensionError(f"predictor returned {pred.shape}, expected {ee.shape}")
        total += float(((pred - ee) ** 2).sum())
    return total / len(ts)


def reverse_sample(c: int, predictor: Predictor, schedule: DiffusionSchedule, seed,
                   dim: int, n: int = 1, x_T=None) -> np.ndarray:
    """Ancestral sampling of ``n`` rows conditioned on label ``c``.

    ``x_T`` overrides the standard-normal start (used to check the single
    step formula by hand).  The step-1 variance is zero.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, dim)) if x_T is None else np.array(x_T, dtype=np.float64).reshape(n, dim)
    labels = np.full(n, c)
    for t in range(schedule.T, 0, -1):
        i = t - 1
        eps = np.asarray(predictor(x, labels, np.full(n, t)))
        mu = (x - schedule.beta[i] / np.sqrt(1.0 - schedule.alpha_bar[i]) * eps) / np.sqrt(schedule.alpha[i])
        if t > 1:
            x = mu + np.sqrt(schedule.posterior_var[i]) * rng.standard_normal((n, dim))
        else:
            x = mu
    return x
