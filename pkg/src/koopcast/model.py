"""End-to-end forecaster: instance normalization, channel-independent
windowing, spectral decomposition, per-branch encode / scan / rollout /
decode, branch summation, and denormalization.

Per channel the pipeline is

    normalize -> decompose into N branch signals -> patchify (K = L/P tokens)
    -> encode -> scan to the final hidden state -> roll out T/P steps
    -> decode each future state to one length-P patch -> concatenate
    -> sum branches -> denormalize

and every stage is differentiable. Forecast horizons are extended by rolling
out more patches with the same operator; nothing is retrained.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field, fields
from typing import Dict, List

import numpy as np

from .errors import ConfigurationError, DimensionError, FormatError
from .koopman import rnn_scan, rollout
from .numerics import Node, add, concat, mean, mul, reshape, select, sub, transpose
from .spectral import FeedForward, GateBank, decompose, init_feedforward, init_gate_bank

NORM_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    The patch length must divide both the lookback and the horizon so patch
    tokenization and patch-wise rollout are exact.
    """

    L: int            # lookback length
    T: int            # forecast horizon
    N: int = 2        # branch count
    D: int = 64       # dynamic (Koopman-space) dimension per branch
    M: int = 1        # hidden layers per encoder/decoder MLP
    P: int = 16       # patch length
    dropout: float = 0.0
    channels: int = 1

    def __post_init__(self):
        if self.L < 2:
            raise ConfigurationError(f"lookback must be at least 2, got {self.L}")
        if self.T < 1:
            raise ConfigurationError(f"horizon must be positive, got {self.T}")
        if self.N < 1 or self.D < 1:
            raise ConfigurationError(
                f"branch count and dimension must be positive, got N={self.N} D={self.D}"
            )
        if self.M not in (1, 2, 3):
            raise ConfigurationError(f"MLP depth must be 1, 2 or 3, got {self.M}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.channels < 1:
            raise ConfigurationError(f"channel count must be positive, got {self.channels}")
        if self.P < 1 or self.L % self.P != 0 or self.T % self.P != 0:
            valid = [p for p in range(1, min(self.L, self.T) + 1)
                     if self.L % p == 0 and self.T % p == 0]
            raise ConfigurationError(
                f"patch length {self.P} must divide both L={self.L} and T={self.T}; "
                f"valid choices: {valid}"
            )

    @property
    def hidden(self) -> int:
        return 2 * self.D

    @property
    def n_tokens(self) -> int:
        return self.L // self.P

    @property
    def n_patches_out(self) -> int:
        return self.T // self.P

    @property
    def gate_len(self) -> int:
        return self.L // 2 + 1

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**{f.name: data[f.name] for f in fields(cls)})


def config_hash(config: dict) -> str:
    """Short stable hash of a JSON-serializable configuration mapping."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


@dataclass
class ForecasterParams:
    """All learnable parameters: gate bank, per-branch encoder MLPs,
    transition matrices, and decoder MLPs. Shared across channels."""

    gates: GateBank
    encoders: List[FeedForward]
    transitions: List[Node]
    decoders: List[FeedForward]

    def named_parameters(self) -> List[tuple[str, Node]]:
        out: List[tuple[str, Node]] = []
        for n, logit in enumerate(self.gates.logits):
            out.append((f"gate_{n}", logit))
        for n, enc in enumerate(self.encoders):
            for i, (w, b) in enumerate(zip(enc.weights, enc.biases)):
                out.append((f"enc_{n}_w{i}", w))
                out.append((f"enc_{n}_b{i}", b))
        for n, w in enumerate(self.transitions):
            out.append((f"trans_{n}", w))
        for n, dec in enumerate(self.decoders):
            for i, (w, b) in enumerate(zip(dec.weights, dec.biases)):
                out.append((f"dec_{n}_w{i}", w))
                out.append((f"dec_{n}_b{i}", b))
        return out

    def count(self) -> int:
        return sum(node.value.size for _, node in self.named_parameters())

    def copy_values(self) -> Dict[str, np.ndarray]:
        return {name: node.value.copy() for name, node in self.named_parameters()}

    def load_values(self, values: Dict[str, np.ndarray]) -> None:
        for name, node in self.named_parameters():
            if name not in values:
                raise FormatError(f"missing parameter tensor {name!r}")
            arr = np.asarray(values[name], dtype=np.float64)
            if arr.shape != node.value.shape:
                raise FormatError(
                    f"parameter {name!r} has shape {arr.shape}, expected {node.value.shape}"
                )
            node.value = arr.copy()


def parameter_count(cfg: ModelConfig) -> int:
    """Closed-form total parameter count for a configuration."""
    h = cfg.hidden
    ffn_enc = (cfg.P * h + h) + (cfg.M - 1) * (h * h + h) + (h * cfg.D + cfg.D)
    ffn_dec = (cfg.D * h + h) + (cfg.M - 1) * (h * h + h) + (h * cfg.P + cfg.P)
    return cfg.N * (cfg.gate_len + ffn_enc + cfg.D * cfg.D + ffn_dec)


def _orthogonal(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(d, d)))
    return q * np.sign(np.diag(r))


def init_params(cfg: ModelConfig, seed: int = 0) -> ForecasterParams:
    """Fresh parameters: zero gate logits, He-initialized MLPs, and
    orthogonal transition matrices scaled to spectral radius 0.99."""
    rng = np.random.default_rng(seed)
    gates = init_gate_bank(cfg.N, cfg.L)
    encoders = [
        init_feedforward(rng, cfg.P, cfg.hidden, cfg.D, cfg.M) for _ in range(cfg.N)
    ]
    transitions = [Node(0.99 * _orthogonal(rng, cfg.D)) for _ in range(cfg.N)]
    decoders = [
        init_feedforward(rng, cfg.D, cfg.hidden, cfg.P, cfg.M) for _ in range(cfg.N)
    ]
    params = ForecasterParams(gates, encoders, transitions, decoders)
    assert params.count() == parameter_count(cfg)
    return params


# ---------------------------------------------------------------- normalization


@dataclass(frozen=True)
class NormState:
    """Per-window, per-channel mean and epsilon-guarded standard deviation."""

    mean: np.ndarray
    std: np.ndarray


def instance_norm(window: np.ndarray) -> tuple[np.ndarray, NormState]:
    """Normalize each channel of an [L, C] window by its own statistics.

    Uses the population variance with an epsilon guard, so constant channels
    map to zeros instead of dividing by zero.
    """
    x = np.asarray(window, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DimensionError(f"expected an [L>=2, C] window, got shape {x.shape}")
    mu = x.mean(axis=0)
    sd = np.sqrt(x.var(axis=0) + NORM_EPS)
    return (x - mu) / sd, NormState(mean=mu, std=sd)


def denormalize(pred, state: NormState):
    """Invert :func:`instance_norm` on a [T, C] prediction (array or Node)."""
    channels = state.mean.shape[0]
    value = pred.value if isinstance(pred, Node) else np.asarray(pred, dtype=np.float64)
    if value.ndim != 2 or value.shape[1] != channels:
        raise DimensionError(
            f"prediction shape {value.shape} does not match {channels} channels"
        )
    if isinstance(pred, Node):
        return add(mul(pred, Node(state.std)), Node(state.mean))
    return value * state.std + state.mean


# ---------------------------------------------------------------- forward


@dataclass
class ForwardTrace:
    """Optional instrumentation filled during a forward pass."""

    scan_steps: int = 0
    rollout_steps: int = 0
    branch_normalized: List[Node] = field(default_factory=list)


def _predict_units(
    x_norm: np.ndarray,
    params: ForecasterParams,
    cfg: ModelConfig,
    n_patches_out: int,
    training: bool,
    rng: np.random.Generator | None,
    trace: ForwardTrace | None,
) -> Node:
    """Normalized-space forecast for a [B, L] batch of single-channel windows."""
    n_batch = x_norm.shape[0]
    window = Node(x_norm)
    branch_signals = decompose(window, params.gates)
    combined = None
    for n in range(cfg.N):
        tokens = reshape(branch_signals[n], (n_batch * cfg.n_tokens, cfg.P))
        z = params.encoders[n].apply(
            tokens, training=training, dropout=cfg.dropout, rng=rng
        )
        z = reshape(z, (n_batch, cfg.n_tokens, cfg.D))
        states = rnn_scan(z, params.transitions[n])
        h_last = select(states, cfg.n_tokens - 1, 1)
        future = rollout(h_last, params.transitions[n], n_patches_out)
        patches = []
        for s in range(n_patches_out):
            h_s = select(future, s, 1)
            patches.append(
                params.decoders[n].apply(
                    h_s, training=training, dropout=cfg.dropout, rng=rng
                )
            )
        branch_pred = concat(patches, axis=1)
        if trace is not None:
            trace.branch_normalized.append(branch_pred)
        combined = branch_pred if combined is None else add(combined, branch_pred)
    if trace is not None:
        trace.scan_steps = cfg.n_tokens
        trace.rollout_steps = n_patches_out
    return combined


def predict_batch(
    windows: np.ndarray,
    params: ForecasterParams,
    cfg: ModelConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
    n_patches_out: int | None = None,
    trace: ForwardTrace | None = None,
) -> Node:
    """Denormalized forecast for a [B, L] batch of single-channel windows.

    Instance statistics are computed per row and folded back into the
    prediction, so the output lives on the scale of the inputs.
    """
    x = np.asarray(windows, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != cfg.L:
        raise DimensionError(f"expected [B, {cfg.L}] windows, got shape {x.shape}")
    steps = cfg.n_patches_out if n_patches_out is None else n_patches_out
    mu = x.mean(axis=1, keepdims=True)
    sd = np.sqrt(x.var(axis=1, keepdims=True) + NORM_EPS)
    pred_norm = _predict_units(
        (x - mu) / sd, params, cfg, steps, training, rng, trace
    )
    return add(mul(pred_norm, Node(sd)), Node(mu))


def forward(
    window: np.ndarray,
    params: ForecasterParams,
    cfg: ModelConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
    trace: ForwardTrace | None = None,
) -> Node:
    """Forecast a single [L, C] window to a [T, C] Node, channels independent."""
    return extend_horizon(window, params, cfg, cfg.T, training=training, rng=rng, trace=trace)


def extend_horizon(
    window: np.ndarray,
    params: ForecasterParams,
    cfg: ModelConfig,
    t_extended: int,
    training: bool = False,
    rng: np.random.Generator | None = None,
    trace: ForwardTrace | None = None,
) -> Node:
    """Forecast ``t_extended`` steps by rolling the operator over more patches.

    Identical to :func:`forward` except for the rollout length; the first T
    rows of the result are bit-identical to a plain forward pass.
    """
    x = np.asarray(window, dtype=np.float64)
    if x.ndim != 2 or x.shape != (cfg.L, cfg.channels):
        raise DimensionError(
            f"expected an [{cfg.L}, {cfg.channels}] window, got shape {x.shape}"
        )
    if t_extended < 1 or t_extended % cfg.P != 0:
        raise ConfigurationError(
            f"extended horizon {t_extended} must be a positive multiple of the "
            f"patch length {cfg.P}"
        )
    pred = predict_batch(
        x.T,
        params,
        cfg,
        training=training,
        rng=rng,
        n_patches_out=t_extended // cfg.P,
        trace=trace,
    )
    return transpose(pred)


def mse_loss(pred, truth) -> Node:
    """Mean of squared elementwise differences (a scalar Node)."""
    p = pred if isinstance(pred, Node) else Node(pred)
    t = truth if isinstance(truth, Node) else Node(truth)
    if p.value.shape != t.value.shape:
        raise DimensionError(
            f"prediction shape {p.value.shape} != truth shape {t.value.shape}"
        )
    diff = sub(p, t)
    return mean(mul(diff, diff))


# ---------------------------------------------------------------- checkpoints

_MAGIC = b"KOOPCAST1\n"


def save_checkpoint(
    path,
    cfg: ModelConfig,
    params: ForecasterParams,
    extras: dict | None = None,
) -> None:
    """Write a self-describing, byte-deterministic checkpoint.

    Layout: magic, 8-byte header length, UTF-8 JSON header (config, extras,
    array names/shapes), then raw little-endian float64 buffers in header
    order. Roundtrips bit-exactly.
    """
    named = params.named_parameters()
    header = {
        "format": 1,
        "config": cfg.to_dict(),
        "extras": extras or {},
        "arrays": [
            {"name": name, "shape": list(node.value.shape)} for name, node in named
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for _, node in named:
            f.write(np.ascontiguousarray(node.value, dtype="<f8").tobytes())


def load_checkpoint(path, expect_config: ModelConfig | None = None):
    """Read a checkpoint; returns (config, params, extras).

    Refuses files whose stored configuration disagrees with ``expect_config``.
    """
    with open(path, "rb") as f:
        if f.read(len(_MAGIC)) != _MAGIC:
            raise FormatError(f"{path} is not a checkpoint file")
        (header_len,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(header_len).decode())
        cfg = ModelConfig.from_dict(header["config"])
        if expect_config is not None and cfg != expect_config:
            for name in cfg.to_dict():
                if cfg.to_dict()[name] != expect_config.to_dict()[name]:
                    raise FormatError(
                        f"checkpoint config field {name!r}="
                        f"{cfg.to_dict()[name]} does not match expected "
                        f"{expect_config.to_dict()[name]}"
                    )
        values: Dict[str, np.ndarray] = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            n_items = int(np.prod(shape)) if shape else 1
            buf = f.read(8 * n_items)
            if len(buf) != 8 * n_items:
                raise FormatError(f"checkpoint truncated in tensor {spec['name']!r}")
            values[spec["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    params = init_params(cfg, seed=0)
    params.load_values(values)
    return cfg, params, header["extras"]
