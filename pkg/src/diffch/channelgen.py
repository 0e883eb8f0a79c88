"""Synthetic labelled channel frequency responses and their summary statistics.

Each scenario is a tapped delay line.  A sample draws jittered tap delays
and powers, a Rician first tap and Rayleigh remaining taps, normalises the
impulse to unit energy, applies the scenario gain (plus optional log-normal
shadowing) and takes a length-``F`` DFT.  Since ``mean_f |H_f|^2`` equals the
impulse energy, "unit power" holds in both domains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractError, FeatureError, ProfileError, SplitError

FEATURE_NAMES = ("path_loss_db", "rms_delay_spread", "num_paths", "k_factor_db")
PATH_THRESHOLD = 1e-2  # -20 dB relative to the strongest tap
K_CLAMP_DB = (-30.0, 40.0)


@dataclass(frozen=True)
class Tap:
    delay: float
    power: float
    power_jitter_db: float = 0.0
    delay_jitter: float = 0.0
    k_db: float | None = None

    def __post_init__(self):
        # normalise so profiles compare equal after a JSON round trip
        for name in ("delay", "power", "power_jitter_db", "delay_jitter"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.k_db is not None:
            object.__setattr__(self, "k_db", float(self.k_db))


@dataclass(frozen=True)
class ScenarioProfile:
    """Tapped-delay-line description of one scenario.

    ``los_k_db`` is the Rician K of the first tap; ``-inf`` makes it Rayleigh
    and ``+inf`` purely deterministic.  Later taps are Rayleigh unless their
    own ``k_db`` says otherwise.  Delay jitter is uniform in
    ``[-delay_jitter, +delay_jitter]`` (rounded to whole samples), power
    jitter is Gaussian in dB.  With ``random_phase=False`` deterministic tap
    components are real and positive.
    """

    label: int
    taps: tuple
    los_k_db: float = -math.inf
    name: str = ""
    gain_db: float = 0.0
    shadow_db: float = 0.0
    random_phase: bool = True

    def validate(self, F: int):
        if not self.taps:
            raise ProfileError(f"profile {self.name!r} has no taps")
        for tap in self.taps:
            if tap.power <= 0:
                raise ProfileError(f"profile {self.name!r}: tap power must be positive")
            if not 0 <= tap.delay < F:
                raise ProfileError(f"profile {self.name!r}: tap delay {tap.delay} outside [0, {F})")
        if self.shadow_db < 0:
            raise ProfileError("shadow_db must be non-negative")

    def to_dict(self) -> dict:
        return {
            "label": self.label, "name": self.name, "los_k_db": self.los_k_db,
            "gain_db": self.gain_db, "shadow_db": self.shadow_db, "random_phase": self.random_phase,
            "taps": [[t.delay, t.power, t.power_jitter_db, t.delay_jitter]
                     + ([] if t.k_db is None else [t.k_db]) for t in self.taps],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioProfile":
        d = dict(d)
        d["taps"] = tuple(Tap(*t) for t in d["taps"])
        d["los_k_db"] = float(d.get("los_k_db", -math.inf))
        return cls(**d)


@dataclass
class ChannelSample:
    freq_response: np.ndarray
    label: int
    snr_db: float = math.inf

    @property
    def F(self) -> int:
        return len(self.freq_response)


@dataclass(frozen=True)
class StatFeatures:
    path_loss_db: float
    rms_delay_spread: float
    num_paths: int
    k_factor_db: float

    def as_array(self) -> np.ndarray:
        return np.array([self.path_loss_db, self.rms_delay_spread, self.num_paths, self.k_factor_db])


@dataclass(frozen=True)
class FeatureStats:
    """Per-feature standardisation statistics taken from a training split."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, feats: np.ndarray) -> "FeatureStats":
        std = feats.std(axis=0)
        # constant features pass through centred but unscaled
        std = np.where(std > 1e-12, std, 1.0)
        return cls(feats.mean(axis=0), std)

    def apply(self, feats: np.ndarray) -> np.ndarray:
        return (np.asarray(feats) - self.mean) / self.std


def default_profiles() -> list[ScenarioProfile]:
    """Three similar indoor scenarios that differ mainly in scatterer layout."""
    return [
        ScenarioProfile(0, (Tap(0, 1.0, 1.0, 0), Tap(3, 0.35, 1.0, 0), Tap(7, 0.25, 1.0, 0)),
                        los_k_db=12.0, name="los-office", shadow_db=2.0),
        ScenarioProfile(1, tuple(Tap(d, math.exp(-d / 3.0), 1.0, 0) for d in range(0, 12, 2)),
                        los_k_db=-math.inf, name="nlos-office", shadow_db=2.0),
        ScenarioProfile(2, (Tap(0, 1.0, 1.0, 0), Tap(3, 0.6, 1.0, 1), Tap(5, 0.4, 1.0, 1),
                            Tap(9, 0.25, 1.0, 1)),
                        los_k_db=3.0, name="mixed-office", shadow_db=2.0),
    ]


# ---------------------------------------------------------------------------
# generation and corruption
# ---------------------------------------------------------------------------

def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def generate_array(profile: ScenarioProfile, count: int, F: int, seed) -> np.ndarray:
    """``(count, F)`` complex frequency responses for ``profile``."""
    if count < 1:
        raise ContractError("count must be >= 1")
    profile.validate(F)
    rng = np.random.default_rng(seed)
    L = len(profile.taps)
    mean_delay = np.array([t.delay for t in profile.taps])
    djit = np.array([t.delay_jitter for t in profile.taps])
    power = np.array([t.power for t in profile.taps])
    pjit = np.array([t.power_jitter_db for t in profile.taps])

    delays = mean_delay + djit * rng.uniform(-1.0, 1.0, (count, L))
    delays = np.clip(np.rint(delays), 0, F - 1).astype(np.intp)
    powers = power * 10.0 ** (pjit * rng.standard_normal((count, L)) / 10.0)

    coef = _cn(rng, (count, L))
    for i, tap in enumerate(profile.taps):
        k_db = tap.k_db if tap.k_db is not None else (profile.los_k_db if i == 0 else -math.inf)
        if k_db == -math.inf:
            continue
        phase = rng.uniform(0, 2 * math.pi, count) if profile.random_phase else np.zeros(count)
        los = np.exp(1j * phase)
        if k_db == math.inf:
            coef[:, i] = los
        else:
            K = 10.0 ** (k_db / 10.0)
            coef[:, i] = math.sqrt(K / (K + 1)) * los + math.sqrt(1 / (K + 1)) * coef[:, i]
    coef = coef * np.sqrt(powers)

    impulse = np.zeros((count, F), dtype=np.complex128)
    rows = np.repeat(np.arange(count), L)
    np.add.at(impulse, (rows, delays.reshape(-1)), coef.reshape(-1))
    energy = (np.abs(impulse) ** 2).sum(axis=1, keepdims=True)
    impulse /= np.sqrt(energy)
    gain_db = profile.gain_db + profile.shadow_db * rng.standard_normal((count, 1))
    impulse *= 10.0 ** (gain_db / 20.0)
    return np.fft.fft(impulse, axis=1)


def generate(profile: ScenarioProfile, count: int, seed, F: int = 400) -> list[ChannelSample]:
    """Draw ``count`` clean samples of one scenario."""
    H = generate_array(profile, count, F, seed)
    return [ChannelSample(h, profile.label) for h in H]


def ls_noise_array(H: np.ndarray, snr_db, rng: np.random.Generator) -> np.ndarray:
    H = np.atleast_2d(H)
    snr_db = np.broadcast_to(np.asarray(snr_db, dtype=np.float64), (H.shape[0],))
    if np.any(np.isnan(snr_db)) or np.any(snr_db == -math.inf):
        raise ContractError("snr_db must be finite or +inf")
    power = (np.abs(H) ** 2).mean(axis=1)
    sigma = np.sqrt(power * 10.0 ** (-snr_db / 10.0))
    return H + sigma[:, None] * _cn(rng, H.shape)


def apply_ls_noise(sample: ChannelSample, snr_db: float, seed) -> ChannelSample:
    """Least-squares estimate of ``sample`` observed at ``snr_db`` (``+inf`` is a no-op)."""
    if not np.all(np.isfinite(sample.freq_response)):
        raise ContractError("channel contains non-finite entries")
    if snr_db == math.inf:
        return ChannelSample(sample.freq_response.copy(), sample.label, snr_db)
    noisy = ls_noise_array(sample.freq_response, snr_db, np.random.default_rng(seed))[0]
    return ChannelSample(noisy, sample.label, float(snr_db))


# ---------------------------------------------------------------------------
# features
# ---------------------------------------------------------------------------

def k_factor_moment(mag: np.ndarray) -> np.ndarray:
    """Second/fourth-moment Rician K estimate (linear) of each row of ``mag``."""
    mag = np.atleast_2d(mag)
    m2 = (mag ** 2).mean(axis=1)
    m4 = (mag ** 4).mean(axis=1)
    root = np.sqrt(np.clip(2.0 * m2 ** 2 - m4, 0.0, None))
    denom = m2 - root
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(denom > 0, root / denom, np.inf)
    return k


def features_array(H: np.ndarray) -> np.ndarray:
    """``(n, 4)`` statistics for each row of ``H`` in :data:`FEATURE_NAMES` order."""
    H = np.atleast_2d(np.asarray(H))
    power = (np.abs(H) ** 2).mean(axis=1)
    if np.any(power <= 0):
        raise FeatureError("cannot extract features from an all-zero channel")
    path_loss = -10.0 * np.log10(power)

    pdp = np.abs(np.fft.ifft(H, axis=1)) ** 2
    delay = np.arange(H.shape[1])
    w = pdp / pdp.sum(axis=1, keepdims=True)
    mu = w @ delay
    spread = np.sqrt(np.clip(w @ (delay ** 2) - mu ** 2, 0.0, None))
    # scale invariance: relative 1e-9 slack keeps a tap from flickering across the threshold
    num_paths = (pdp >= pdp.max(axis=1, keepdims=True) * PATH_THRESHOLD * (1 - 1e-9)).sum(axis=1)

    with np.errstate(divide="ignore"):
        k_db = 10.0 * np.log10(k_factor_moment(np.abs(H)))
    k_db = np.clip(k_db, *K_CLAMP_DB)
    return np.column_stack([path_loss, spread, num_paths, k_db])


def extract_features(sample: ChannelSample) -> StatFeatures:
    f = features_array(sample.freq_response)[0]
    return StatFeatures(float(f[0]), float(f[1]), int(f[2]), float(f[3]))


def input_vector(H: np.ndarray, feats: np.ndarray, stats: FeatureStats | None) -> np.ndarray:
    """Rows ``[Re h, Im h, standardised features]`` of length ``2F + 4``."""
    if stats is None:
        raise ContractError("feature standardisation statistics are required")
    H = np.atleast_2d(H)
    return np.concatenate([H.real, H.imag, stats.apply(np.atleast_2d(feats))], axis=1)


def build_input(sample: ChannelSample, feats: StatFeatures, stats: FeatureStats | None) -> np.ndarray:
    return input_vector(sample.freq_response, feats.as_array(), stats)[0]


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

@dataclass
class Dataset:
    """Labelled channels with an optional stratified train/test assignment."""

    H: np.ndarray
    labels: np.ndarray
    snr_db: np.ndarray
    num_scenarios: int
    names: tuple = ()
    train_idx: np.ndarray | None = None
    test_idx: np.ndarray | None = None
    sampling_rate: float | None = None
    stats: FeatureStats | None = None
    _features: np.ndarray | None = field(default=None, repr=False)

    @property
    def F(self) -> int:
        return self.H.shape[1]

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def features(self) -> np.ndarray:
        if self._features is None:
            self._features = features_array(self.H)
        return self._features

    def counts(self, idx=None) -> np.ndarray:
        labels = self.labels if idx is None else self.labels[idx]
        return np.bincount(labels, minlength=self.num_scenarios)

    def sample(self, i: int) -> ChannelSample:
        return ChannelSample(self.H[i], int(self.labels[i]), float(self.snr_db[i]))

    def inputs(self, idx=None, H=None) -> np.ndarray:
        """Model inputs for rows ``idx`` (or for override channels ``H``)."""
        if H is None:
            H = self.H if idx is None else self.H[idx]
            feats = self.features if idx is None else self.features[idx]
        else:
            feats = features_array(H)
        return input_vector(H, feats, self.stats)

    def by_scenario(self, idx=None) -> list[np.ndarray]:
        """Row indices of each scenario within ``idx`` (default: training split)."""
        idx = self.train_idx if idx is None else idx
        return [idx[self.labels[idx] == c] for c in range(self.num_scenarios)]


def make_dataset(profiles, per_scenario: int, F: int, seed) -> Dataset:
    """Draw ``per_scenario`` samples from every profile with independent streams."""
    seeds = np.random.SeedSequence(seed).spawn(len(profiles))
    H = np.concatenate([generate_array(p, per_scenario, F, s) for p, s in zip(profiles, seeds)])
    labels = np.concatenate([np.full(per_scenario, p.label) for p in profiles]).astype(np.intp)
    return Dataset(H, labels, np.full(len(labels), math.inf), len(profiles),
                   tuple(p.name for p in profiles))


def split(dataset: Dataset, sampling_rate: float, seed) -> Dataset:
    """Stratified train/test partition; also fits feature standardisation on train."""
    if not 0.0 < sampling_rate < 1.0:
        raise SplitError(f"sampling rate must lie in (0, 1), got {sampling_rate}")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in range(dataset.num_scenarios):
        idx = np.flatnonzero(dataset.labels == c)
        if len(idx) < 2:
            raise SplitError(f"scenario {c} has {len(idx)} samples; need at least 2")
        n_train = min(max(int(round(sampling_rate * len(idx))), 1), len(idx) - 1)
        perm = rng.permutation(idx)
        train.append(np.sort(perm[:n_train]))
        test.append(np.sort(perm[n_train:]))
    train_idx, test_idx = np.concatenate(train), np.concatenate(test)
    stats = FeatureStats.fit(dataset.features[train_idx])
    return replace(dataset, train_idx=train_idx, test_idx=test_idx,
                   sampling_rate=sampling_rate, stats=stats, _features=dataset._features)
