"""Linear-RNN realization of a structured (block-diagonal) Koopman operator.

One transition matrix per branch drives three views of the same recurrence:
a sequential scan over encoded tokens, a closed-form unrolling used as an
oracle, and a zero-input rollout that produces forecasts. An EDMD fit and an
eigenvalue report round out the operator toolbox.

All functions are pure; they accept plain arrays or autodiff Nodes and return
a Node whenever any input carries a tape.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, NumericError
from .numerics import Node, add, affine, as_node, constant, matmul, stack, transpose


class RankDeficiencyWarning(UserWarning):
    """The snapshot matrix is rank deficient; the pseudoinverse fit is not unique."""


def _wants_node(*args) -> bool:
    return any(isinstance(a, Node) for a in args)


def _check_square(w: np.ndarray) -> int:
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise DimensionError(f"transition matrix must be square, got {w.shape}")
    return w.shape[0]


def _as_batched(z: Node) -> tuple[Node, bool]:
    """Normalize [K, D] to [1, K, D]; report whether a batch axis was added."""
    if z.value.ndim == 2:
        from .numerics import reshape

        return reshape(z, (1,) + z.value.shape), True
    if z.value.ndim == 3:
        return z, False
    raise DimensionError(f"expected [K, D] or [B, K, D] inputs, got {z.value.shape}")


def rnn_scan(Z, W, h0=None):
    """Run h_k = W h_{k-1} + z_k over the token axis, returning all K states.

    ``Z`` is [K, D] or [B, K, D]; ``W`` is [D, D]; ``h0`` defaults to zero.
    Differentiable in every argument.
    """
    want_node = _wants_node(Z, W, h0)
    z, w = as_node(Z), as_node(W)
    d = _check_square(w.value)
    zb, squeeze = _as_batched(z)
    n_batch, n_steps, d_in = zb.value.shape
    if d_in != d:
        raise DimensionError(
            f"token width {d_in} does not match transition width {d}"
        )
    from .numerics import reshape, select

    w_t = transpose(w)
    if h0 is None:
        h = as_node(np.zeros((n_batch, d)))
    else:
        h = as_node(h0)
        if h.value.ndim == 1:
            h = reshape(h, (1, d))
        if h.value.shape != (n_batch, d):
            raise DimensionError(
                f"initial state shape {h.value.shape} does not match ({n_batch}, {d})"
            )
    states = []
    for k in range(n_steps):
        h = add(matmul(h, w_t), select(zb, k, 1))
        states.append(h)
    out = stack(states, axis=1)
    if squeeze:
        out = reshape(out, (n_steps, d))
    return out if want_node else out.value


def rnn_closed_form(Z, W):
    """Closed-form hidden states h_k = sum_{s=0}^{k-1} W^s z_{k-s} (h0 = 0).

    Same contract as :func:`rnn_scan` with a zero initial state, computed via
    precomputed operator powers instead of a sequential pass.
    """
    want_node = _wants_node(Z, W)
    z, w = as_node(Z), as_node(W)
    d = _check_square(w.value)
    zb, squeeze = _as_batched(z)
    n_batch, n_steps, d_in = zb.value.shape
    if d_in != d:
        raise DimensionError(
            f"token width {d_in} does not match transition width {d}"
        )
    from .numerics import reshape, select

    # powers[s] holds (W^s)^T for the row-vector form z @ (W^s)^T.
    powers = [as_node(np.eye(d))]
    for _ in range(1, n_steps):
        powers.append(matmul(powers[-1], transpose(w)))
    states = []
    for k in range(n_steps):
        acc = None
        for s in range(k + 1):
            term = select(zb, k - s, 1)
            if s > 0:
                term = matmul(term, powers[s])
            acc = term if acc is None else add(acc, term)
        states.append(acc)
    out = stack(states, axis=1)
    if squeeze:
        out = reshape(out, (n_steps, d))
    return out if want_node else out.value


def rollout(hL, W, n_steps: int):
    """Zero-input continuation: step t is W^t applied to the final state.

    ``hL`` is [D] or [B, D]; the result stacks the ``n_steps`` future states
    along a new axis ([n_steps, D] or [B, n_steps, D]). Each step reuses the
    previous state, so exactly ``n_steps`` transition applications occur.
    """
    if n_steps < 1:
        raise DomainError(f"rollout needs at least one step, got {n_steps}")
    want_node = _wants_node(hL, W)
    h, w = as_node(hL), as_node(W)
    d = _check_square(w.value)
    from .numerics import reshape

    squeeze = h.value.ndim == 1
    if squeeze:
        h = reshape(h, (1, d))
    if h.value.shape[1] != d:
        raise DimensionError(
            f"state width {h.value.shape[1]} does not match transition width {d}"
        )
    w_t = transpose(w)
    states = []
    for _ in range(n_steps):
        h = matmul(h, w_t)
        states.append(h)
    out = stack(states, axis=1)
    if squeeze:
        out = reshape(out, (n_steps, d))
    return out if want_node else out.value


def assemble_block_diagonal(blocks) -> np.ndarray:
    """Stack per-branch transition matrices into one block-diagonal operator."""
    mats = [np.asarray(b.value if isinstance(b, Node) else b, dtype=np.float64) for b in blocks]
    if not mats:
        raise DimensionError("need at least one block")
    widths = []
    for m in mats:
        widths.append(_check_square(m))
    if len(set(widths)) != 1:
        raise DimensionError(f"blocks must share one width, got {widths}")
    d = widths[0]
    out = np.zeros((d * len(mats), d * len(mats)))
    for i, m in enumerate(mats):
        out[i * d : (i + 1) * d, i * d : (i + 1) * d] = m
    return out


@dataclass(frozen=True)
class SpectrumReport:
    """Eigenvalues of one branch's transition matrix, sorted by magnitude."""

    branch: int
    eigenvalues: np.ndarray  # complex128, descending |lambda|

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.eigenvalues)

    @property
    def spectral_radius(self) -> float:
        return float(self.magnitudes[0]) if len(self.eigenvalues) else 0.0

    def csv_rows(self) -> list[tuple[int, float, float, float]]:
        return [
            (self.branch, float(ev.real), float(ev.imag), float(abs(ev)))
            for ev in self.eigenvalues
        ]


SPECTRUM_CSV_HEADER = ("branch", "re", "im", "magnitude")


def eigenvalues(W, branch: int = 0) -> SpectrumReport:
    """Full complex spectrum of a transition matrix, largest magnitude first."""
    w = np.asarray(W.value if isinstance(W, Node) else W, dtype=np.float64)
    _check_square(w)
    try:
        vals = np.linalg.eigvals(w)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigenvalue iteration did not converge: {exc}") from exc
    order = np.argsort(-np.abs(vals), kind="stable")
    return SpectrumReport(branch=branch, eigenvalues=vals[order])


def edmd_fit(snapshots_prev, snapshots_next, ridge: float = 0.0) -> np.ndarray:
    """Least-squares operator fit M minimizing ||P M - Y||_F^2 (+ ridge ||M||^2).

    Rows of ``snapshots_prev``/``snapshots_next`` are observable vectors at
    consecutive times; the returned M acts on the right of row-stacked
    observables, so for column-vector dynamics x' = A x with identity
    observables the fit recovers A^T.

    With ridge == 0 the Moore-Penrose pseudoinverse is used; a rank-deficient
    snapshot matrix still yields the minimum-norm solution but raises a
    :class:`RankDeficiencyWarning`.
    """
    p = np.asarray(snapshots_prev, dtype=np.float64)
    y = np.asarray(snapshots_next, dtype=np.float64)
    if p.ndim != 2 or y.ndim != 2 or p.shape != y.shape:
        raise DimensionError(
            f"snapshot matrices must be equal-shaped [K, n_g]; got {p.shape} and {y.shape}"
        )
    if ridge < 0:
        raise DomainError(f"ridge weight must be nonnegative, got {ridge}")
    n_g = p.shape[1]
    if ridge == 0.0:
        if np.linalg.matrix_rank(p) < n_g:
            warnings.warn(
                "snapshot matrix is rank deficient; returning the minimum-norm "
                "pseudoinverse fit",
                RankDeficiencyWarning,
                stacklevel=2,
            )
        return np.linalg.pinv(p) @ y
    gram = p.T @ p + ridge * np.eye(n_g)
    return np.linalg.solve(gram, p.T @ y)
