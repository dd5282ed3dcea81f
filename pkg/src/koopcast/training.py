"""AdamW optimization, the training loop, and forecast metrics.

Training runs over shuffled mini-batches of channel-independent units,
evaluates validation MSE after every epoch, keeps the best checkpoint, and
stops early when validation stalls. Everything is seeded, so a rerun with
the same configuration reproduces the loss curves bitwise.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

from .data_io import Dataset, expand_channels, make_windows
from .errors import ConfigurationError, DimensionError, NumericError
from .model import (
    ForecasterParams,
    ModelConfig,
    init_params,
    mse_loss,
    predict_batch,
    save_checkpoint,
)
from .numerics import Node, backward


# ---------------------------------------------------------------- AdamW


@dataclass
class OptimizerState:
    """Per-parameter first/second moments plus the shared step counter."""

    lr: float = 1e-4
    weight_decay: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first: Dict[str, np.ndarray] = field(default_factory=dict)
    second: Dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(
    named_params: Sequence[tuple[str, Node]],
    grads: Dict[Node, np.ndarray],
    state: OptimizerState,
) -> OptimizerState:
    """One decoupled-weight-decay Adam update, in place.

    Weight decay multiplies parameters by (1 - lr*wd) separately from the
    bias-corrected adaptive step. Missing gradients are treated as zero.
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, node in named_params:
        g = grads.get(node)
        if g is None:
            g = np.zeros_like(node.value)
        if not np.all(np.isfinite(g)):
            raise NumericError(
                f"non-finite gradient for parameter {name!r} at step {t}; training aborted"
            )
        m = state.first.get(name)
        v = state.second.get(name)
        if m is None:
            m = np.zeros_like(node.value)
            v = np.zeros_like(node.value)
            state.first[name] = m
            state.second[name] = v
        np.multiply(m, state.beta1, out=m)
        m += (1.0 - state.beta1) * g
        np.multiply(v, state.beta2, out=v)
        v += (1.0 - state.beta2) * (g * g)
        denom = np.sqrt(v / bc2)
        denom += state.eps
        update = m / bc1
        update /= denom
        new_value = node.value * (1.0 - state.lr * state.weight_decay)
        new_value -= state.lr * update
        node.value = new_value
    return state


# ---------------------------------------------------------------- metrics


@dataclass(frozen=True)
class MetricReport:
    """Forecast error summary. The scale-free metrics are univariate-only
    and stay None when they do not apply (or are undefined)."""

    mse: float
    mae: float
    smape: float | None = None
    mase: float | None = None
    owa: float | None = None
    n_samples: int = 1

    def as_dict(self) -> dict:
        return {
            "mse": self.mse,
            "mae": self.mae,
            "smape": self.smape,
            "mase": self.mase,
            "owa": self.owa,
            "n_samples": self.n_samples,
        }


def _smape(pred: np.ndarray, truth: np.ndarray) -> float:
    denom = np.abs(truth) + np.abs(pred)
    terms = np.zeros_like(denom)
    nz = denom > 0
    terms[nz] = np.abs(truth[nz] - pred[nz]) / denom[nz]
    return float(200.0 * terms.mean())


def _seasonal_scale(history: np.ndarray, m: int) -> float:
    if m < 1:
        raise ConfigurationError(f"seasonality must be >= 1, got {m}")
    if len(history) <= m:
        raise ConfigurationError(
            f"history of {len(history)} points is too short for seasonality {m}"
        )
    return float(np.mean(np.abs(history[m:] - history[:-m])))


def _naive2_forecast(history: np.ndarray, m: int, horizon: int) -> np.ndarray:
    last_season = history[len(history) - m :]
    reps = int(np.ceil(horizon / m))
    return np.tile(last_season, reps)[:horizon]


def evaluate(
    pred: np.ndarray,
    truth: np.ndarray,
    history: np.ndarray | None = None,
    m: int = 1,
    n_samples: int = 1,
) -> MetricReport:
    """MSE/MAE always; sMAPE for univariate pairs; MASE and OWA when an
    in-sample history and seasonality are supplied.

    The MASE denominator is the seasonal-naive scale of the history; a
    constant seasonal history makes MASE (and hence OWA) undefined rather
    than infinite. OWA compares against the plain seasonal-naive reference
    forecast built from the same history.
    """
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape:
        raise DimensionError(f"prediction shape {p.shape} != truth shape {t.shape}")
    mse = float(np.mean((p - t) ** 2))
    mae = float(np.mean(np.abs(p - t)))
    univariate = p.ndim == 1 or (p.ndim == 2 and p.shape[1] == 1)
    smape = _smape(p.ravel(), t.ravel()) if univariate else None
    mase = owa = None
    if history is not None and univariate:
        hist = np.asarray(history, dtype=np.float64).ravel()
        scale = _seasonal_scale(hist, m)
        if scale > 0.0:
            mase = mae / scale
            naive = _naive2_forecast(hist, m, len(t.ravel()))
            smape_ref = _smape(naive, t.ravel())
            mase_ref = float(np.mean(np.abs(t.ravel() - naive))) / scale
            if smape_ref > 0.0 and mase_ref > 0.0 and smape is not None:
                owa = 0.5 * (smape / smape_ref + mase / mase_ref)
    return MetricReport(mse=mse, mae=mae, smape=smape, mase=mase, owa=owa, n_samples=n_samples)


# ---------------------------------------------------------------- batched inference


def predict_units(
    x: np.ndarray,
    params: ForecasterParams,
    cfg: ModelConfig,
    batch_size: int = 256,
    threads: int = 1,
) -> np.ndarray:
    """Eval-mode forecasts for [U, L] single-channel windows -> [U, T].

    Batches are independent read-only passes, so they may run on a thread
    pool; results are placed by index and do not depend on thread count.
    """
    n_units = x.shape[0]
    out = np.empty((n_units, cfg.T))
    spans = [(i, min(i + batch_size, n_units)) for i in range(0, n_units, batch_size)]

    def run(span):
        lo, hi = span
        out[lo:hi] = predict_batch(x[lo:hi], params, cfg, training=False).value

    if threads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, spans))
    else:
        for span in spans:
            run(span)
    return out


def persistence_forecast(x: np.ndarray, horizon: int) -> np.ndarray:
    """Repeat each window's last value across the horizon ([U, L] -> [U, T])."""
    return np.repeat(x[:, -1:], horizon, axis=1)


# ---------------------------------------------------------------- training loop


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigurationError("batch size, epochs and patience must be positive")


@dataclass
class EpochLog:
    epoch: int
    train_mse: float
    val_mse: float
    lr: float
    seconds: float


@dataclass
class TrainResult:
    params: ForecasterParams
    cfg: ModelConfig
    history: List[EpochLog]
    best_val: float
    best_epoch: int
    stopped_early: bool
    best_path: Path | None = None
    last_path: Path | None = None


def _units_to_arrays(units) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([u.x for u in units])
    y = np.stack([u.y for u in units])
    return x, y


def train(
    cfg: ModelConfig,
    dataset: Dataset,
    tcfg: TrainConfig,
    run_dir: Path | str | None = None,
    extras: dict | None = None,
    log_fn=None,
) -> TrainResult:
    """Fit a model on the dataset's train split, early-stopping on val MSE.

    Writes ``best.ckpt``, ``last.ckpt`` and ``train_log.csv`` into ``run_dir``
    when given. A NaN loss aborts training but the checkpoints written so far
    are retained.
    """
    if dataset.n_channels != cfg.channels:
        raise ConfigurationError(
            f"dataset has {dataset.n_channels} channels but the model expects {cfg.channels}"
        )
    train_range, val_range, _ = dataset.split_ranges()
    x_train, y_train = _units_to_arrays(
        expand_channels(make_windows(dataset, train_range, cfg.L, cfg.T))
    )
    x_val, y_val = _units_to_arrays(
        expand_channels(make_windows(dataset, val_range, cfg.L, cfg.T))
    )

    params = init_params(cfg, seed=tcfg.seed)
    named = params.named_parameters()
    state = OptimizerState(
        lr=tcfg.lr,
        weight_decay=tcfg.weight_decay,
        beta1=tcfg.beta1,
        beta2=tcfg.beta2,
        eps=tcfg.eps,
    )
    shuffle_rng = np.random.default_rng(tcfg.seed)
    dropout_rng = np.random.default_rng(tcfg.seed + 1)

    run_path = Path(run_dir) if run_dir is not None else None
    best_path = last_path = None
    if run_path is not None:
        run_path.mkdir(parents=True, exist_ok=True)
        best_path = run_path / "best.ckpt"
        last_path = run_path / "last.ckpt"

    def val_mse() -> float:
        preds = predict_units(x_val, params, cfg, batch_size=max(tcfg.batch_size, 256))
        return float(np.mean((preds - y_val) ** 2))

    def save(path, epoch):
        if path is not None:
            save_checkpoint(
                path,
                cfg,
                params,
                extras={**(extras or {}), "epoch": epoch, "train_seed": tcfg.seed},
            )

    history: List[EpochLog] = []
    best_val = np.inf
    best_epoch = -1
    best_values = params.copy_values()
    stale = 0
    stopped_early = False
    n_units = x_train.shape[0]

    for epoch in range(tcfg.max_epochs):
        started = time.perf_counter()
        order = shuffle_rng.permutation(n_units)
        sse = 0.0
        for lo in range(0, n_units, tcfg.batch_size):
            idx = order[lo : lo + tcfg.batch_size]
            pred = predict_batch(
                x_train[idx], params, cfg, training=True, rng=dropout_rng
            )
            loss = mse_loss(pred, y_train[idx])
            if not np.isfinite(loss.value):
                save(last_path, epoch)
                raise NumericError(
                    f"loss diverged at epoch {epoch}; last good checkpoint retained"
                )
            grads = backward(loss)
            adamw_step(named, grads, state)
            sse += float(loss.value) * len(idx)
        train_mse = sse / n_units
        current_val = val_mse()
        entry = EpochLog(
            epoch=epoch,
            train_mse=train_mse,
            val_mse=current_val,
            lr=tcfg.lr,
            seconds=time.perf_counter() - started,
        )
        history.append(entry)
        if log_fn is not None:
            log_fn(entry)
        save(last_path, epoch)
        if current_val < best_val:
            best_val = current_val
            best_epoch = epoch
            best_values = params.copy_values()
            save(best_path, epoch)
            stale = 0
        else:
            stale += 1
            if stale >= tcfg.patience:
                stopped_early = True
                break

    params.load_values(best_values)
    if run_path is not None:
        write_train_log(run_path / "train_log.csv", history)
    return TrainResult(
        params=params,
        cfg=cfg,
        history=history,
        best_val=best_val,
        best_epoch=best_epoch,
        stopped_early=stopped_early,
        best_path=best_path,
        last_path=last_path,
    )


def write_train_log(path, history: Sequence[EpochLog]) -> None:
    with open(path, "w", newline="\n") as f:
        f.write("epoch,train_mse,val_mse,lr,seconds\n")
        for entry in history:
            f.write(
                f"{entry.epoch},{entry.train_mse!r},{entry.val_mse!r},"
                f"{entry.lr!r},{entry.seconds:.3f}\n"
            )


# ---------------------------------------------------------------- split evaluation


@dataclass
class EvalResult:
    report: MetricReport
    predictions: np.ndarray  # [U, T] per channel-unit
    targets: np.ndarray
    units: list


def evaluate_split(
    params: ForecasterParams,
    cfg: ModelConfig,
    dataset: Dataset,
    split: str = "test",
    stride: int = 1,
    batch_size: int = 256,
    threads: int = 1,
) -> EvalResult:
    """Forecast every window of a split and aggregate elementwise MSE/MAE."""
    units = expand_channels(
        make_windows(dataset, dataset.range_for(split), cfg.L, cfg.T, stride=stride)
    )
    x, y = _units_to_arrays(units)
    preds = predict_units(x, params, cfg, batch_size=batch_size, threads=threads)
    report = evaluate(preds, y, n_samples=len(units))
    return EvalResult(report=report, predictions=preds, targets=y, units=units)
