"""Conditioned noise-prediction network.

The patch layer first rotates the channel block into the delay domain (a
fixed orthogonal map, so white noise stays white), then zero-pads the vector
to a multiple of ``patch_size``, cuts it into tokens and projects them to
width ``hidden_size``.  Each transformer block
cross-attends from the tokens to key/value tokens produced by a conditioning
network from the (label, step) pair, then runs an MLP whose hidden
activations are scaled and shifted by the same conditioning network.  The
unpatch projection maps tokens back and the inverse rotation returns the
prediction to the frequency domain.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import numcore as nc
from .errors import ConfigError, ContractError, DimensionError
from .numcore import Tensor


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    num_scenarios: int
    T: int = 30
    patch_size: int = 2
    hidden_size: int = 64
    num_blocks: int = 4
    num_heads: int = 1
    num_cond_tokens: int = 4
    cond_mlp_depth: int = 4
    cond_hidden: int = 64
    label_dim: int = 16
    time_dim: int = 16
    mlp_ratio: int = 4
    token_kv: bool = False
    delay_tokens: bool = True
    num_features: int = 4

    def __post_init__(self):
        for name in ("input_dim", "num_scenarios", "T", "patch_size", "hidden_size", "num_blocks",
                     "num_heads", "num_cond_tokens", "cond_mlp_depth", "cond_hidden", "label_dim",
                     "mlp_ratio"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.time_dim < 2 or self.time_dim % 2:
            raise ConfigError("time_dim must be an even number >= 2")
        if self.hidden_size % self.num_heads:
            raise ConfigError("hidden_size must be divisible by num_heads")
        if self.delay_tokens:
            body = self.input_dim - self.num_features
            if self.num_features < 0 or body < 2 or body % 2:
                raise ConfigError("delay_tokens needs input_dim = 2F + num_features with F >= 1")

    @property
    def freq_bins(self) -> int:
        return (self.input_dim - self.num_features) // 2

    @property
    def pad(self) -> int:
        return (-self.input_dim) % self.patch_size

    @property
    def num_tokens(self) -> int:
        return (self.input_dim + self.pad) // self.patch_size

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def param_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    """Name -> shape for every learnable parameter, in canonical order."""
    p, d, k = cfg.patch_size, cfg.hidden_size, cfg.num_cond_tokens
    hid = cfg.mlp_ratio * d
    shapes = {
        "patch.w": (p, d),
        "patch.b": (d,),
        "pos": (cfg.num_tokens, d),
        "cond.label": (cfg.num_scenarios, cfg.label_dim),
    }
    width = cfg.label_dim + cfg.time_dim
    for i in range(cfg.cond_mlp_depth - 1):
        shapes[f"cond.l{i}.w"] = (width, cfg.cond_hidden)
        shapes[f"cond.l{i}.b"] = (cfg.cond_hidden,)
        width = cfg.cond_hidden
    for b in range(cfg.num_blocks):
        shapes[f"cond.b{b}.key.w"] = (width, k * d)
        shapes[f"cond.b{b}.key.b"] = (k * d,)
        shapes[f"cond.b{b}.value.w"] = (width, k * d)
        shapes[f"cond.b{b}.value.b"] = (k * d,)
        shapes[f"cond.b{b}.scale.w"] = (width, hid)
        shapes[f"cond.b{b}.scale.b"] = (hid,)
        shapes[f"cond.b{b}.shift.w"] = (width, hid)
        shapes[f"cond.b{b}.shift.b"] = (hid,)
        if cfg.token_kv:
            shapes[f"cond.b{b}.kvmod.w"] = (width, 2 * d)
            shapes[f"cond.b{b}.kvmod.b"] = (2 * d,)
    for b in range(cfg.num_blocks):
        shapes[f"blk{b}.ln1"] = (d,)
        shapes[f"blk{b}.wq"] = (d, d)
        if cfg.token_kv:
            shapes[f"blk{b}.wk"] = (d, d)
            shapes[f"blk{b}.wv"] = (d, d)
        shapes[f"blk{b}.wo"] = (d, d)
        shapes[f"blk{b}.bo"] = (d,)
        shapes[f"blk{b}.ln2"] = (d,)
        shapes[f"blk{b}.w1"] = (d, hid)
        shapes[f"blk{b}.b1"] = (hid,)
        shapes[f"blk{b}.w2"] = (hid, d)
        shapes[f"blk{b}.b2"] = (d,)
    shapes["ln_f"] = (d,)
    shapes["unpatch.w"] = (d, p)
    shapes["unpatch.b"] = (p,)
    return shapes


def param_count(cfg: ModelConfig) -> int:
    """Closed-form parameter count."""
    p, d, k, h = cfg.patch_size, cfg.hidden_size, cfg.num_cond_tokens, cfg.mlp_ratio * cfg.hidden_size
    ch, depth = cfg.cond_hidden, cfg.cond_mlp_depth
    trunk_in = cfg.label_dim + cfg.time_dim
    if depth > 1:
        trunk = (trunk_in + 1) * ch + (depth - 2) * (ch + 1) * ch
        head_in = ch
    else:
        trunk, head_in = 0, trunk_in
    heads = cfg.num_blocks * (head_in + 1) * (2 * k * d + 2 * h + (2 * d if cfg.token_kv else 0))
    blocks = cfg.num_blocks * (2 * d + (4 if cfg.token_kv else 2) * d * d + d + 2 * d * h + h + d)
    return (p * d + d + cfg.num_tokens * d + cfg.num_scenarios * cfg.label_dim
            + trunk + heads + blocks + d + d * p + p)


def to_delay_domain(x: np.ndarray, F: int) -> np.ndarray:
    """Orthogonal map ``[Re H, Im H, rest] -> [Re g0, Im g0, Re g1, ..., rest]``
    with ``g = sqrt(F) * IDFT(H)``."""
    g = np.fft.ifft(x[..., :F] + 1j * x[..., F:2 * F], axis=-1) * math.sqrt(F)
    inter = np.stack([g.real, g.imag], axis=-1).reshape(x.shape[:-1] + (2 * F,))
    return np.concatenate([inter, x[..., 2 * F:]], axis=-1)


def from_delay_domain(z: np.ndarray, F: int) -> np.ndarray:
    """Inverse (and transpose) of :func:`to_delay_domain`."""
    inter = z[..., :2 * F].reshape(z.shape[:-1] + (F, 2))
    H = np.fft.fft(inter[..., 0] + 1j * inter[..., 1], axis=-1) / math.sqrt(F)
    return np.concatenate([H.real, H.imag, z[..., 2 * F:]], axis=-1)


def time_embedding(t, dim: int) -> np.ndarray:
    """Sinusoidal embedding of integer steps, shape ``(len(t), dim)``."""
    t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    ang = t * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


class NoisePredictor:
    """Parameters plus forward pass of the conditioned noise predictor.

    Calling the instance evaluates without recording gradients and returns a
    plain array; :meth:`forward` returns a :class:`Tensor` that participates
    in an active tape.
    """

    def __init__(self, config: ModelConfig, params: dict[str, Tensor]):
        shapes = param_shapes(config)
        if list(shapes) != list(params) or any(params[n].shape != s for n, s in shapes.items()):
            raise ContractError("parameter set does not match the model configuration")
        self.config = config
        self.params = params

    # -- conditioning ------------------------------------------------------
    def _check_condition(self, c, t):
        cfg = self.config
        if np.any(c < 0) or np.any(c >= cfg.num_scenarios):
            raise ContractError(f"scenario label out of range 0..{cfg.num_scenarios - 1}")
        if np.any(t < 1) or np.any(t > cfg.T):
            raise ContractError(f"diffusion step out of range 1..{cfg.T}")

    def _condition(self, c, t):
        cfg, P = self.config, self.params
        d, k = cfg.hidden_size, cfg.num_cond_tokens
        n = len(c)
        u = nc.concat([nc.take(P["cond.label"], c), Tensor(time_embedding(t, cfg.time_dim))], axis=-1)
        for i in range(cfg.cond_mlp_depth - 1):
            u = nc.silu(u @ P[f"cond.l{i}.w"] + P[f"cond.l{i}.b"])
        bundles = []
        for b in range(cfg.num_blocks):
            pre = f"cond.b{b}."
            key = (u @ P[pre + "key.w"] + P[pre + "key.b"]).reshape(n, k, d)
            value = (u @ P[pre + "value.w"] + P[pre + "value.b"]).reshape(n, k, d)
            scale = (u @ P[pre + "scale.w"] + P[pre + "scale.b"]).reshape(n, 1, -1)
            shift = (u @ P[pre + "shift.w"] + P[pre + "shift.b"]).reshape(n, 1, -1)
            bundle = {"key": key, "value": value, "scale": scale, "shift": shift}
            if cfg.token_kv:
                bundle["kv_scale"] = (u @ P[pre + "kvmod.w"] + P[pre + "kvmod.b"]).reshape(n, 1, 2 * d)
            bundles.append(bundle)
        return bundles

    def embed_condition(self, c, t) -> list[dict[str, np.ndarray]]:
        """Per-block key/value tokens and MLP modulation for a batch of (c, t)."""
        c = np.atleast_1d(np.asarray(c, dtype=np.intp))
        t = np.atleast_1d(np.asarray(t, dtype=np.intp))
        self._check_condition(c, t)
        return [{k: v.data for k, v in b.items()} for b in self._condition(c, t)]

    # -- forward -----------------------------------------------------------
    def _attend(self, q: Tensor, key: Tensor, value: Tensor):
        cfg = self.config
        n, N, d = q.shape
        H = cfg.num_heads
        dh = d // H
        k = key.shape[1]
        if H > 1:
            q = q.reshape(n, N, H, dh).swapaxes(1, 2)
            key = key.reshape(n, k, H, dh).swapaxes(1, 2)
            value = value.reshape(n, k, H, dh).swapaxes(1, 2)
        attn = nc.softmax((q @ key.swapaxes(-1, -2)) * (1.0 / math.sqrt(dh)), axis=-1)
        out = attn @ value
        if H > 1:
            out = out.swapaxes(1, 2).reshape(n, N, d)
        return out, attn

    def forward(self, x, c, t, collect_attention: bool = False):
        cfg, P = self.config, self.params
        x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
        if x.ndim == 1:
            x = x.reshape(1, -1)
        if x.shape[-1] != cfg.input_dim:
            raise DimensionError(f"input length {x.shape[-1]} != model input_dim {cfg.input_dim}")
        n = x.shape[0]
        c = np.broadcast_to(np.asarray(c, dtype=np.intp), (n,))
        t = np.broadcast_to(np.asarray(t, dtype=np.intp), (n,))
        self._check_condition(c, t)

        if cfg.delay_tokens:
            F = cfg.freq_bins
            x = nc.linear_map(x, lambda a: to_delay_domain(a, F), lambda g: from_delay_domain(g, F))
        tokens = nc.pad_last(x, cfg.pad).reshape(n, cfg.num_tokens, cfg.patch_size)
        z = tokens @ P["patch.w"] + P["patch.b"] + P["pos"]
        attention = []
        for b, bundle in enumerate(self._condition(c, t)):
            pre = f"blk{b}."
            zn = nc.layer_norm(z, P[pre + "ln1"])
            q = zn @ P[pre + "wq"]
            key, value = bundle["key"], bundle["value"]
            if cfg.token_kv:
                d = cfg.hidden_size
                mod = bundle["kv_scale"] + 1.0
                key = nc.concat([key, (zn @ P[pre + "wk"]) * mod[:, :, :d]], axis=1)
                value = nc.concat([value, (zn @ P[pre + "wv"]) * mod[:, :, d:]], axis=1)
            att, weights = self._attend(q, key, value)
            if collect_attention:
                attention.append(weights.data)
            z = z + att @ P[pre + "wo"] + P[pre + "bo"]
            a = nc.silu(nc.layer_norm(z, P[pre + "ln2"]) @ P[pre + "w1"] + P[pre + "b1"])
            a = a * (bundle["scale"] + 1.0) + bundle["shift"]
            z = z + a @ P[pre + "w2"] + P[pre + "b2"]
        out = nc.layer_norm(z, P["ln_f"]) @ P["unpatch.w"] + P["unpatch.b"]
        out = out.reshape(n, cfg.num_tokens * cfg.patch_size)
        if cfg.pad:
            out = out[:, :cfg.input_dim]
        if cfg.delay_tokens:
            out = nc.linear_map(out, lambda a: from_delay_domain(a, F), lambda g: to_delay_domain(g, F))
        return (out, attention) if collect_attention else out

    def predict_noise(self, x, c, t) -> np.ndarray:
        """Predicted noise with the same shape as ``x`` (1-D or batched)."""
        arr = np.asarray(x, dtype=np.float64)
        out = self.forward(arr, c, t).data
        return out.reshape(arr.shape)

    __call__ = predict_noise

    def attention_weights(self, x, c, t) -> list[np.ndarray]:
        return self.forward(x, c, t, collect_attention=True)[1]

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def copy(self) -> "NoisePredictor":
        return NoisePredictor(self.config, {k: Tensor(v.data.copy(), requires_grad=True)
                                            for k, v in self.params.items()})


def init_params(config: ModelConfig, seed) -> NoisePredictor:
    """Deterministic initialisation; the unpatch projection starts at zero."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if name.startswith("unpatch."):
            arr = np.zeros(shape)
        elif leaf in ("ln1", "ln2") or name == "ln_f":
            arr = np.ones(shape)
        elif leaf in ("b", "bo", "b1", "b2"):
            arr = np.zeros(shape)
        elif name == "pos":
            arr = 0.1 * rng.standard_normal(shape)
        elif name == "cond.label":
            arr = rng.standard_normal(shape)
        else:
            arr = rng.standard_normal(shape) / math.sqrt(shape[0])
        params[name] = Tensor(arr, requires_grad=True)
    return NoisePredictor(config, params)
