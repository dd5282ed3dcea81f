"""Independent straight-line oracles used across the test suite.

Everything here is deliberately naive (direct sums, triple loops,
re-implementations without the tape) so it shares no code with the
implementation paths it checks.
"""

from __future__ import annotations

import numpy as np


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Max elementwise difference relative to the larger magnitude scale."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(b), initial=0.0), 1e-8)
    return float(np.max(np.abs(a - b), initial=0.0) / scale)


def matmul_loops(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Triple-loop matrix product."""
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def dft_direct(x: np.ndarray) -> np.ndarray:
    """Direct-sum half-spectrum DFT: X[f] = sum_k x[k] exp(-2i*pi*f*k/L)."""
    x = np.asarray(x, dtype=np.float64)
    length = len(x)
    bins = []
    for f in range(length // 2 + 1):
        acc = 0.0 + 0.0j
        for k in range(length):
            acc += x[k] * np.exp(-2j * np.pi * f * k / length)
        bins.append(acc)
    return np.array(bins, dtype=np.complex128)


def idft_direct(bins: np.ndarray, length: int) -> np.ndarray:
    """Direct-sum inverse of a half spectrum (conjugate-symmetric extension)."""
    full = np.zeros(length, dtype=np.complex128)
    nbins = length // 2 + 1
    full[:nbins] = bins
    for f in range(1, length - nbins + 1):
        full[length - f] = np.conj(bins[f])
    x = np.zeros(length, dtype=np.float64)
    for k in range(length):
        acc = 0.0 + 0.0j
        for f in range(length):
            acc += full[f] * np.exp(2j * np.pi * f * k / length)
        x[k] = acc.real / length
    return x


def ffn_plain(x: np.ndarray, weights, biases) -> np.ndarray:
    """Plain-numpy MLP: affine + ReLU for all but the last affine."""
    out = np.asarray(x, dtype=np.float64)
    for i, (w, b) in enumerate(zip(weights, biases)):
        out = out @ w + b
        if i < len(weights) - 1:
            out = np.maximum(out, 0.0)
    return out


def decompose_plain(window: np.ndarray, logits: np.ndarray) -> np.ndarray:
    """Gated spectral reconstruction without the tape."""
    gate = 1.0 / (1.0 + np.exp(-np.asarray(logits, dtype=np.float64)))
    spec = np.fft.rfft(window)
    return np.fft.irfft(spec * gate, n=len(window))


def pipeline_plain(window: np.ndarray, cfg, params) -> np.ndarray:
    """Straight-line re-implementation of the full forecast pipeline.

    ``window`` is [L, C]; returns [T, C]. Mirrors the published contract:
    per channel, instance-normalize, decompose into branches, patchify,
    encode, scan, roll out, decode patch by patch, sum branches, denormalize.
    """
    length, channels = window.shape
    horizon = cfg.T
    k_tokens = cfg.L // cfg.P
    s_steps = cfg.T // cfg.P
    preds = np.zeros((horizon, channels))
    for c in range(channels):
        series = window[:, c]
        mu = series.mean()
        sd = np.sqrt(series.var() + 1e-5)
        xn = (series - mu) / sd
        combined = np.zeros(horizon)
        for n in range(cfg.N):
            yn = decompose_plain(xn, params.gates.logits[n].value)
            tokens = yn.reshape(k_tokens, cfg.P)
            enc = params.encoders[n]
            z = ffn_plain(
                tokens,
                [w.value for w in enc.weights],
                [b.value for b in enc.biases],
            )
            w_mat = params.transitions[n].value
            h = np.zeros(cfg.D)
            for t in range(k_tokens):
                h = w_mat @ h + z[t]
            dec = params.decoders[n]
            for s in range(s_steps):
                h = w_mat @ h
                patch = ffn_plain(
                    h,
                    [w.value for w in dec.weights],
                    [b.value for b in dec.biases],
                )
                combined[s * cfg.P : (s + 1) * cfg.P] += patch
        preds[:, c] = combined * sd + mu
    return preds
