"""Training of the noise predictor, diffusion-likelihood classification and
a logistic-regression feature baseline."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import numcore as nc
from .channelgen import Dataset
from .diffusion import DiffusionSchedule, forward_corrupt, make_schedule, mc_residual, sample_draws
from .errors import ConfigError, ContractError, DimensionError, TrainingError
from .model import ModelConfig, NoisePredictor, init_params
from .numcore import OptimizerState, Tape, Tensor, optimizer_step

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    steps: int = 20000
    batch_size: int = 32
    lr: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    log_every: int = 500
    T: int = 30
    beta_start: float = 1e-4
    beta_end: float = 0.02
    model: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError("steps and batch_size must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if not self.lr > 0:
            raise ConfigError("learning rate must be positive")

    def schedule(self) -> DiffusionSchedule:
        return make_schedule(self.T, self.beta_start, self.beta_end)

    def model_config(self, input_dim: int, num_scenarios: int) -> ModelConfig:
        return ModelConfig(input_dim=input_dim, num_scenarios=num_scenarios, T=self.T, **self.model)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    predictor: NoisePredictor
    schedule: DiffusionSchedule
    history: np.ndarray
    config: TrainConfig


@dataclass
class ClassificationResult:
    eta: np.ndarray
    posterior: np.ndarray
    label: int
    M: int
    seed: object = None


# ---------------------------------------------------------------------------
# objective
# ---------------------------------------------------------------------------

def noise_loss(x0: np.ndarray, c, t, eps: np.ndarray, schedule: DiffusionSchedule,
               predictor: NoisePredictor) -> Tensor:
    """Batch mean of ``||eps - predictor(x_t, c, t)||^2`` for explicit draws."""
    xt = forward_corrupt(x0, t, eps, schedule)
    pred = predictor.forward(xt, c, t)
    return nc.sq_norm_rows(pred - eps).mean()


def loss(h, c, schedule: DiffusionSchedule, predictor: NoisePredictor, rng: np.random.Generator) -> Tensor:
    """Single- or multi-row training loss with freshly sampled ``t`` and noise."""
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    n = h.shape[0]
    t = rng.integers(1, schedule.T + 1, size=n)
    eps = rng.standard_normal(h.shape)
    out = noise_loss(h, np.broadcast_to(c, (n,)), t, eps, schedule, predictor)
    if not np.isfinite(out.data).all():
        raise TrainingError("non-finite loss")
    return out


def train(dataset: Dataset, config: TrainConfig, predictor: NoisePredictor | None = None) -> TrainResult:
    """Sample scenario, channel, step and noise; descend on the noise loss.

    Each batch row draws its scenario uniformly, then a training channel of
    that scenario uniformly.  The loss history holds one batch mean per step.
    """
    if dataset.train_idx is None:
        raise ContractError("dataset has no train/test split")
    groups = dataset.by_scenario()
    if any(len(g) == 0 for g in groups):
        raise ContractError("every scenario needs at least one training sample")
    X = dataset.inputs()
    schedule = config.schedule()
    rng = np.random.default_rng(config.seed)
    if predictor is None:
        mcfg = config.model_config(X.shape[1], dataset.num_scenarios)
        predictor = init_params(mcfg, rng.integers(2 ** 63))
    names = list(predictor.params)
    plist = [predictor.params[n] for n in names]
    opt = OptimizerState(lr=config.lr, method=config.optimizer)
    C = dataset.num_scenarios
    history = np.empty(config.steps)
    for step in range(config.steps):
        c = rng.integers(0, C, size=config.batch_size)
        rows = np.array([groups[ci][rng.integers(len(groups[ci]))] for ci in c])
        with Tape() as tape:
            try:
                value = loss(X[rows], c, schedule, predictor, rng)
            except TrainingError as exc:
                raise TrainingError(f"loss diverged at step {step}", step=step) from exc
        history[step] = value.item()
        grads = tape.backward(value, plist)
        try:
            optimizer_step(opt, predictor.params, dict(zip(names, grads)))
        except TrainingError as exc:
            exc.step = step
            raise
        if config.log_every and (step + 1) % config.log_every == 0:
            log.info("step %d  loss %.4f", step + 1, history[max(0, step - config.log_every + 1):step + 1].mean())
    return TrainResult(predictor, schedule, history, config)


def smoothed(history: np.ndarray, window: int = 100) -> np.ndarray:
    window = min(window, len(history))
    return np.convolve(history, np.ones(window) / window, mode="valid")


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

def posterior_from_eta(eta) -> np.ndarray:
    """``softmax(-eta)``; ties in the argmax go to the lowest index."""
    return nc.softmax(-np.asarray(eta, dtype=np.float64)).data


def classify(h, predictor, schedule: DiffusionSchedule, M: int, seed, num_scenarios: int | None = None,
             order=None) -> ClassificationResult:
    """Monte-Carlo diffusion likelihood classification of one input vector.

    The same ``M`` (step, noise) draws are shared by every scenario.
    ``order`` only permutes the evaluation sequence; results are stored by
    label.
    """
    if M < 1:
        raise ContractError("M must be >= 1")
    h = np.asarray(h, dtype=np.float64).reshape(-1)
    if num_scenarios is None:
        num_scenarios = predictor.config.num_scenarios
    cfg = getattr(predictor, "config", None)
    if cfg is not None and cfg.input_dim != h.shape[0]:
        raise DimensionError(f"input length {h.shape[0]} != model input_dim {cfg.input_dim}")
    draws = sample_draws(h.shape[0], M, schedule, np.random.default_rng(seed))
    eta = np.zeros(num_scenarios)
    for c in (range(num_scenarios) if order is None else order):
        eta[c] = mc_residual(h, c, draws, predictor, schedule)
    post = posterior_from_eta(eta)
    return ClassificationResult(eta, post, int(np.argmax(post)), M, seed)


def classify_many(X: np.ndarray, predictor, schedule: DiffusionSchedule, M: int, seed,
                  ids=None, num_scenarios: int | None = None) -> list[ClassificationResult]:
    """Classify each row of ``X``; row ``i`` uses seed ``(seed, ids[i])``."""
    ids = np.arange(len(X)) if ids is None else ids
    return [classify(x, predictor, schedule, M, [int(seed), int(i)], num_scenarios)
            for x, i in zip(X, ids)]


# ---------------------------------------------------------------------------
# baseline
# ---------------------------------------------------------------------------

@dataclass
class LogisticBaseline:
    """Multinomial logistic regression on standardised statistical features."""

    weights: np.ndarray
    bias: np.ndarray

    @property
    def num_classes(self) -> int:
        return len(self.bias)

    def logits(self, feats_std: np.ndarray) -> np.ndarray:
        feats_std = np.atleast_2d(feats_std)
        if feats_std.shape[1] != self.weights.shape[0]:
            raise DimensionError("feature width does not match the baseline")
        return feats_std @ self.weights + self.bias

    def predict(self, feats_std: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(feats_std), axis=1)


def fit_baseline(feats_std: np.ndarray, labels: np.ndarray, num_classes: int,
                 l2: float = 1e-4) -> LogisticBaseline:
    """Penalised maximum-likelihood fit by L-BFGS (strictly convex, so the
    optimum does not depend on sample order)."""
    X = np.asarray(feats_std, dtype=np.float64)
    if np.any(np.abs(X.mean(axis=0)) > 1e3):
        raise ContractError("baseline features look unstandardised")
    y = np.asarray(labels)
    n, k = X.shape
    Y = np.eye(num_classes)[y]

    def objective(theta):
        W = theta[:k * num_classes].reshape(k, num_classes)
        b = theta[k * num_classes:]
        z = X @ W + b
        z = z - z.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        p = np.exp(logp)
        f = -(Y * logp).sum() / n + 0.5 * l2 * (W ** 2).sum()
        g = (p - Y) / n
        gW = X.T @ g + l2 * W
        return f, np.concatenate([gW.ravel(), g.sum(axis=0)])

    theta0 = np.zeros(k * num_classes + num_classes)
    res = minimize(objective, theta0, jac=True, method="L-BFGS-B",
                   options={"maxiter": 2000, "gtol": 1e-10, "ftol": 1e-14})
    W = res.x[:k * num_classes].reshape(k, num_classes)
    return LogisticBaseline(W, res.x[k * num_classes:])


def baseline_classify(features, baseline: LogisticBaseline, stats=None) -> int:
    """Label of one feature vector; pass ``stats`` when ``features`` are raw."""
    f = features.as_array() if hasattr(features, "as_array") else np.asarray(features, dtype=np.float64)
    if stats is not None:
        f = stats.apply(f)
    elif np.any(np.abs(f) > 50):
        raise ContractError("baseline expects standardised features")
    return int(baseline.predict(f)[0])


def accuracy(pred, truth) -> float:
    return float(np.mean(np.asarray(pred) == np.asarray(truth)))
