"""Linear-algebra primitives for the OFDM block model.

The DFT used throughout has entries ``exp(-j2pi(p-1)(q-1-N/2)/N)/sqrt(N)``
(1-indexed). Because ``exp(j2pi(p-1)(N/2)/N) = (-1)**(p-1)`` this is the
standard unitary DFT with every output bin multiplied by ``(-1)**k``, which
lets the hot path use ``numpy.fft`` with a sign flip.

Diagonal operators (the CFO phasor and its derivatives) are represented by
their diagonal vectors.
"""

from __future__ import annotations

from collections import Counter

import numpy as np


def dft_matrix(n: int) -> np.ndarray:
    """Dense ``n x n`` DFT matrix in the centered convention."""
    if n < 1:
        raise ValueError(f"DFT size must be positive, got {n}")
    p = np.arange(n)[:, None]
    q = np.arange(n)[None, :]
    return np.exp(-2j * np.pi * p * (q - n / 2) / n) / np.sqrt(n)


def _bin_signs(n: int) -> np.ndarray:
    return np.where(np.arange(n) % 2 == 0, 1.0, -1.0)


def dft(x: np.ndarray) -> np.ndarray:
    """Apply ``F`` along the last axis (FFT path)."""
    n = x.shape[-1]
    return _bin_signs(n) * np.fft.fft(x, axis=-1) / np.sqrt(n)


def idft(x: np.ndarray) -> np.ndarray:
    """Apply ``F^H`` along the last axis (FFT path)."""
    n = x.shape[-1]
    return np.fft.ifft(_bin_signs(n) * x, axis=-1) * np.sqrt(n)


def cfo_phasor(eps: float, n: int) -> np.ndarray:
    """Diagonal of ``Gamma(eps)``: ``exp(j 2 pi eps k / N)`` for k = 0..N-1."""
    if not np.isfinite(eps):
        raise ValueError(f"CFO must be finite, got {eps}")
    return np.exp(2j * np.pi * eps * np.arange(n) / n)


def cfo_phasor_derivatives(eps: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Diagonals of the first and second derivatives of ``Gamma`` w.r.t. eps."""
    gamma = cfo_phasor(eps, n)
    k = np.arange(n)
    first = (2j * np.pi / n) * k * gamma
    second = -((2 * np.pi / n) ** 2) * k**2 * gamma
    return first, second


def ici_matrix(eps: float, n: int) -> np.ndarray:
    """Dense ``F Gamma(eps) F^H``; diagnostics only."""
    f = dft_matrix(n)
    return f @ (cfo_phasor(eps, n)[:, None] * f.conj().T)


def complex_normal(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with the given variance."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def wrap_phase(theta):
    """Wrap radians to (-pi, pi]."""
    wrapped = np.angle(np.exp(1j * np.asarray(theta)))
    return np.where(wrapped == -np.pi, np.pi, wrapped)


class TransformCounter:
    """Tally of DFT/IDFT block transforms, bucketed by tag.

    Tags listed in ``CORE_TAGS`` are the transforms a receiver needs for its
    signal path; everything else (channel-vector transforms, least-squares
    refits, reconstruction after the last update, final decisions) is counted
    under its own tag and reported separately.
    """

    CORE_TAGS = ("preamble", "decode", "soft_idft", "reconstruct")

    def __init__(self):
        self.counts: Counter[str] = Counter()

    def add(self, tag: str, n: int = 1) -> None:
        self.counts[tag] += int(n)

    @property
    def core(self) -> int:
        return sum(self.counts[t] for t in self.CORE_TAGS)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def as_dict(self) -> dict[str, int]:
        return dict(sorted(self.counts.items()))
