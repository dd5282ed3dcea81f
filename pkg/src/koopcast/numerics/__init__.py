"""Dense float64 tensor arithmetic, real-input Fourier transforms, and
reverse-mode automatic differentiation.

Tensors are plain ``numpy.ndarray`` values in double precision; the
differentiable layer wraps them in :class:`Node`. Both are immutable by
convention once created and safe to share across threads; a tape (graph of
Nodes) is confined to a single thread.
"""

from .autodiff import (
    Node,
    add,
    affine,
    as_node,
    backward,
    concat,
    constant,
    finite_difference_grad,
    matmul,
    mean,
    mul,
    neg,
    relu,
    reshape,
    select,
    sigmoid,
    spectral_gate,
    stack,
    sub,
    tensor_sum,
    transpose,
)
from .fft import ComplexSpectrum, half_spectrum_weights, irfft, rfft

__all__ = [
    "ComplexSpectrum",
    "Node",
    "add",
    "affine",
    "as_node",
    "backward",
    "concat",
    "constant",
    "finite_difference_grad",
    "half_spectrum_weights",
    "irfft",
    "matmul",
    "mean",
    "mul",
    "neg",
    "relu",
    "reshape",
    "rfft",
    "select",
    "sigmoid",
    "spectral_gate",
    "stack",
    "sub",
    "tensor_sum",
    "transpose",
]
