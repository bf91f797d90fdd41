"""Soft IDFT: Gaussian beliefs on time-domain samples from symbol APPs.

With independent BPSK posteriors the mean of ``y = F^H D(X) F h`` is exactly
``F^H (m_X * H)`` by linearity, so the mean path needs one IFFT per block.
The variance path is the diagonal of ``F^H diag(s) F``, which is the constant
``mean(s)``; the receivers never use it.
"""

from __future__ import annotations

import numpy as np

from .numerics import idft


def symbol_means(llrs: np.ndarray) -> np.ndarray:
    """``E[X] = tanh(LLR/2)`` for BPSK with ``LLR = log p(+1)/p(-1)``."""
    return np.tanh(0.5 * np.asarray(llrs, dtype=float))


def symbol_variances(llrs: np.ndarray) -> np.ndarray:
    """``Var[X] = 1 - tanh(LLR/2)^2``."""
    return 1.0 - symbol_means(llrs) ** 2


def symbol_posterior_mean(m_x: np.ndarray, H: np.ndarray) -> np.ndarray:
    """``m_Y = H * m_X`` per subcarrier."""
    return np.asarray(m_x) * H


def soft_idft_mean(m_y_freq: np.ndarray) -> np.ndarray:
    """Time-domain mean ``F^H m_Y`` along the last axis."""
    return idft(m_y_freq)


def soft_idft_variance(var_freq: np.ndarray) -> np.ndarray:
    """Diagonal of ``F^H diag(var) F`` along the last axis."""
    var_freq = np.asarray(var_freq, dtype=float)
    if np.any(var_freq < 0):
        raise ValueError("variances must be nonnegative")
    return np.broadcast_to(var_freq.mean(axis=-1, keepdims=True), var_freq.shape).copy()
