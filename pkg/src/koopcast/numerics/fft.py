"""Real-input discrete Fourier transforms in the half-spectrum convention.

For a real signal of length L the transform keeps bins 0..floor(L/2); the
missing half is implied by conjugate symmetry. Forward convention:

    X[f] = sum_k x[k] * exp(-2*pi*i*f*k / L)

The DC bin (and the Nyquist bin when L is even) is exactly real.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError, DomainError, FormatError


@dataclass(frozen=True)
class ComplexSpectrum:
    """Half-spectrum of a real signal.

    ``bins`` is a complex128 vector of length ``floor(L/2) + 1`` where
    ``L == original_length``.
    """

    bins: np.ndarray
    original_length: int

    def __len__(self) -> int:
        return len(self.bins)

    def as_pairs(self) -> list[tuple[float, float]]:
        """Bins as (real, imaginary) pairs, e.g. for CSV export."""
        return [(float(b.real), float(b.imag)) for b in self.bins]


def half_spectrum_weights(length: int) -> np.ndarray:
    """Multiplicity of each half-spectrum bin in the full spectrum.

    1 for DC and (even L) Nyquist, 2 for every other bin. These are the
    weights under which Parseval's identity holds on the half spectrum:
    sum |x_k|^2 == (1/L) * sum w_f |X_f|^2.
    """
    if length < 1:
        raise DomainError(f"signal length must be >= 1, got {length}")
    weights = np.full(length // 2 + 1, 2.0)
    weights[0] = 1.0
    if length % 2 == 0:
        weights[-1] = 1.0
    return weights


def rfft(signal: np.ndarray) -> ComplexSpectrum:
    """Half-spectrum DFT of a real 1-D signal of any length."""
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError(f"rfft expects a 1-D signal, got shape {x.shape}")
    if x.size == 0:
        raise DomainError("cannot transform an empty signal")
    bins = np.fft.rfft(x).astype(np.complex128)
    # Mathematically exact for real input; enforce so the invariant is bitwise.
    bins.imag[0] = 0.0
    if x.size % 2 == 0:
        bins.imag[-1] = 0.0
    return ComplexSpectrum(bins=bins, original_length=x.size)


def irfft(spectrum: ComplexSpectrum) -> np.ndarray:
    """Real inverse transform reconstructing the original length-L signal."""
    length = spectrum.original_length
    expected = length // 2 + 1
    if len(spectrum.bins) != expected:
        raise FormatError(
            f"spectrum carries {len(spectrum.bins)} bins but original_length="
            f"{length} requires {expected}"
        )
    return np.fft.irfft(spectrum.bins, n=length).astype(np.float64)
