"""First-order optimisers operating on named parameter dictionaries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, ContractError, TrainingError
from .tensor import Tensor


@dataclass
class OptimizerState:
    """Moment accumulators and hyperparameters of an adaptive-moment optimiser.

    ``method="sgd"`` ignores the moments and applies ``p -= lr * g``.
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    method: str = "adam"
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimiser {self.method!r}")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")


def optimizer_step(state: OptimizerState, params: dict[str, Tensor],
                   grads: dict[str, np.ndarray]) -> dict[str, Tensor]:
    """Apply one update in place and return ``params``.

    Raises :class:`TrainingError` naming the first parameter whose gradient is
    not finite; in that case nothing is modified.
    """
    if set(params) != set(grads):
        raise ContractError("params and grads must have identical keys")
    for name in params:
        if not np.all(np.isfinite(grads[name])):
            raise TrainingError(f"non-finite gradient for parameter {name!r}",
                                step=state.step + 1, param=name)
    state.step += 1
    t = state.step
    if state.method == "sgd":
        for name, p in params.items():
            p.data = p.data - state.lr * grads[name]
        return params
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(g)
            v = np.zeros_like(g)
        else:
            v = state.v[name]
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        p.data = p.data - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params
