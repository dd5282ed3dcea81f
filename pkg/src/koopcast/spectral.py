"""Learnable frequency decomposition and per-branch measurement functions.

A bank of sigmoid gates filters the half spectrum of the input window into N
branch signals; each branch then encodes non-overlapping patches with its own
MLP into the space the linear operator acts on. Decomposition happens on the
raw window before patching, and all of it is differentiable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from .errors import ConfigurationError, DimensionError
from .numerics import Node, affine, constant, mul, relu, reshape, sigmoid, spectral_gate


@dataclass
class GateBank:
    """Per-branch frequency-selection logits, one vector per branch.

    Each vector holds one real logit per half-spectrum bin, so a window of
    length L requires vectors of length floor(L/2)+1. Gate values are
    sigmoid(logit), guaranteed inside (0, 1).
    """

    logits: List[Node]

    def __post_init__(self):
        if len(self.logits) < 1:
            raise ConfigurationError("a gate bank needs at least one branch")
        lengths = {v.value.shape for v in self.logits}
        if len(lengths) != 1:
            raise DimensionError(f"gate vectors must share one length, got {lengths}")

    @property
    def n_branches(self) -> int:
        return len(self.logits)

    @property
    def n_bins(self) -> int:
        return self.logits[0].value.shape[0]

    def gate_values(self, branch: int) -> Node:
        return sigmoid(self.logits[branch])


@dataclass
class FeedForward:
    """An MLP: M hidden (affine + ReLU) layers followed by a final affine.

    Weights are stored [in, out]; inputs are row-stacked tokens. Dropout, when
    active, is applied after each hidden ReLU only.
    """

    weights: List[Node]
    biases: List[Node]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or len(self.weights) < 2:
            raise ConfigurationError(
                "a feed-forward block needs matching weight/bias lists with at "
                "least one hidden and one output affine"
            )

    @property
    def width_in(self) -> int:
        return self.weights[0].value.shape[0]

    @property
    def width_out(self) -> int:
        return self.weights[-1].value.shape[1]

    @property
    def n_hidden_layers(self) -> int:
        return len(self.weights) - 1

    def apply(
        self,
        tokens: Node,
        training: bool = False,
        dropout: float = 0.0,
        rng: np.random.Generator | None = None,
    ) -> Node:
        if tokens.value.ndim != 2 or tokens.value.shape[1] != self.width_in:
            raise DimensionError(
                f"tokens of shape {tokens.value.shape} do not match FFN input "
                f"width {self.width_in}"
            )
        out = tokens
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out = affine(out, w, b)
            if i < len(self.weights) - 1:
                out = relu(out)
                if training and dropout > 0.0:
                    if rng is None:
                        raise ConfigurationError("dropout in training mode needs an rng")
                    keep = (rng.random(out.value.shape) >= dropout) / (1.0 - dropout)
                    out = mul(out, constant(keep))
        return out


def init_gate_bank(n_branches: int, window_length: int) -> GateBank:
    """Zero-initialized logits: every gate starts at 0.5 on every bin."""
    n_bins = window_length // 2 + 1
    return GateBank(logits=[Node(np.zeros(n_bins)) for _ in range(n_branches)])


def init_feedforward(
    rng: np.random.Generator,
    width_in: int,
    width_hidden: int,
    width_out: int,
    n_hidden_layers: int,
) -> FeedForward:
    """He-initialized weights (ReLU hidden layers), zero biases."""
    widths = [width_in] + [width_hidden] * n_hidden_layers + [width_out]
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        scale = np.sqrt(2.0 / fan_in)
        weights.append(Node(rng.normal(0.0, scale, size=(fan_in, fan_out))))
        biases.append(Node(np.zeros(fan_out)))
    return FeedForward(weights=weights, biases=biases)


def decompose(window, gates: GateBank) -> List[Node]:
    """Split a window into N gated spectral reconstructions.

    ``window`` is a length-L signal (or a [batch, L] stack); each output is a
    real signal of the same shape: irfft(rfft(window) * sigmoid(logits)).
    Differentiable with respect to both the window and the gate logits.
    """
    w = window if isinstance(window, Node) else Node(window)
    length = w.value.shape[-1]
    expected = length // 2 + 1
    if gates.n_bins != expected:
        raise DimensionError(
            f"gate vectors of length {gates.n_bins} do not match the {expected} "
            f"half-spectrum bins of a length-{length} window"
        )
    return [spectral_gate(w, gates.gate_values(n)) for n in range(gates.n_branches)]


def valid_patch_lengths(length: int) -> List[int]:
    return [p for p in range(1, length + 1) if length % p == 0]


def patchify(signal, patch_len: int) -> Node:
    """Reshape a signal into non-overlapping patch tokens, order preserved.

    [L] becomes [L/P, P]; [B, L] becomes [B, L/P, P]. The patch length must
    divide the signal length exactly.
    """
    s = signal if isinstance(signal, Node) else Node(signal)
    length = s.value.shape[-1]
    if patch_len < 1 or length % patch_len != 0:
        raise ConfigurationError(
            f"patch length {patch_len} does not divide signal length {length}; "
            f"valid choices: {valid_patch_lengths(length)}"
        )
    new_shape = s.value.shape[:-1] + (length // patch_len, patch_len)
    return reshape(s, new_shape)


def unpatchify(tokens) -> Node:
    """Exact inverse of :func:`patchify`."""
    t = tokens if isinstance(tokens, Node) else Node(tokens)
    if t.value.ndim < 2:
        raise DimensionError(f"expected patch tokens, got shape {t.value.shape}")
    new_shape = t.value.shape[:-2] + (t.value.shape[-2] * t.value.shape[-1],)
    return reshape(t, new_shape)


def encode(
    tokens,
    ffn: FeedForward,
    training: bool = False,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
) -> Node:
    """Apply one branch's measurement MLP to row-stacked tokens [K, P] -> [K, D]."""
    t = tokens if isinstance(tokens, Node) else Node(tokens)
    return ffn.apply(t, training=training, dropout=dropout, rng=rng)
