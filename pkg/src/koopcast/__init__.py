"""Koopman-operator time-series forecasting.

A forecasting engine built on a learnable spectral decomposition, MLP
measurement functions, and a block-diagonal linear operator realized as a
stack of parallel linear RNNs. Ships with an EDMD baseline, deterministic
nonlinear-dynamical-system generators, and a training/evaluation CLI.
"""

__version__ = "0.1.0"
