"""Slow, independent reference computations.

These avoid the FFT path and the trellis entirely (dense matrices, scalar
loops, exhaustive enumeration, grid search) so that they can check the fast
implementations. ``run_selftest`` bundles the quick ones for the CLI.
"""

from __future__ import annotations

import cmath
import itertools
import math

import numpy as np

from . import fec
from .numerics import cfo_phasor, cfo_phasor_derivatives, dft, dft_matrix, idft


def dft_entry(n: int, p: int, q: int) -> complex:
    """Entry ``(p, q)`` (1-indexed) of the centered DFT, from the defining formula."""
    return cmath.exp(-2j * math.pi * (p - 1) * (q - (1 + n / 2)) / n) / math.sqrt(n)


def dft_matrix_loop(n: int) -> np.ndarray:
    return np.array([[dft_entry(n, p, q) for q in range(1, n + 1)] for p in range(1, n + 1)])


def code_posteriors(channel_llrs: np.ndarray, config: fec.CodeConfig):
    """Exact info and chip LLRs plus the ML info word, by enumerating all ``2^J`` payloads."""
    j = config.info_bits
    if j > 12:
        raise ValueError("enumeration is limited to J <= 12")
    words = np.array(list(itertools.product((0, 1), repeat=j)), dtype=np.int8)
    chips = np.array([fec.idma_encode(w, config) for w in words])
    scores = 0.5 * (fec.bpsk(chips) * channel_llrs).sum(axis=1)

    def llr(bits):
        zero = np.where(bits == 0, scores[:, None], -np.inf)
        one = np.where(bits == 1, scores[:, None], -np.inf)
        with np.errstate(invalid="ignore"):
            return np.logaddexp.reduce(zero, axis=0) - np.logaddexp.reduce(one, axis=0)

    best = int(np.argmax(scores))
    return llr(words), llr(chips), words[best], chips[best], scores


def soft_idft_enumeration(p_plus: np.ndarray, H: np.ndarray):
    """Exact mean and variance of ``y = F^H D(X) H`` over independent BPSK ``X``."""
    n = len(p_plus)
    fh = dft_matrix(n).conj().T
    mean = np.zeros(n, dtype=complex)
    second = np.zeros(n)
    for pattern in itertools.product((1.0, -1.0), repeat=n):
        x = np.array(pattern)
        prob = np.prod(np.where(x > 0, p_plus, 1 - p_plus))
        y = fh @ (x * H)
        mean += prob * y
        second += prob * np.abs(y) ** 2
    return mean, second - np.abs(mean) ** 2


def q_samplewise(rr: np.ndarray, grid: np.ndarray, h: np.ndarray, cfo: float, phases: np.ndarray) -> float:
    """ECM objective as an explicit double sum over blocks and samples.

    The mean samples come from dense ``F^H D(m_X) F h``.
    """
    n = rr.shape[1]
    f = dft_matrix(n)
    total = 0.0
    for m in range(rr.shape[0]):
        y = f.conj().T @ (grid[m] * (f @ h))
        for i in range(n):
            model = cmath.exp(1j * phases[m]) * cmath.exp(2j * math.pi * cfo * i / n) * y[i]
            total += 2 * (rr[m, i].conjugate() * model).real - abs(y[i]) ** 2
    return total


def grid_argmax(func, lo: float, hi: float, step: float) -> float:
    grid = np.arange(lo, hi + 0.5 * step, step)
    values = np.array([func(x) for x in grid])
    return float(grid[int(np.argmax(values))])


# ---------------------------------------------------------------------------
# selftest


def _check(name, ok, detail):
    return {"name": name, "passed": bool(ok), "detail": detail}


def run_selftest(seed: int = 0) -> list[dict]:
    """Quick oracle comparisons; each entry has ``name``, ``passed``, ``detail``."""
    from .framing import FrameConfig
    from .receivers import ecm_phase_update, q_function

    rng = np.random.default_rng(seed)
    out = []

    worst = 0.0
    for n in (4, 16, 64):
        f = dft_matrix(n)
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        worst = max(worst, np.max(np.abs(f @ f.conj().T - np.eye(n))), np.max(np.abs(f @ x - dft(x))),
                    np.max(np.abs(idft(dft(x)) - x)), np.max(np.abs(f - dft_matrix_loop(n))))
    out.append(_check("dft unitary and FFT path", worst < 1e-10, f"max err {worst:.2e}"))

    d = 1e-6
    g1, g2 = cfo_phasor_derivatives(0.1, 16)
    fd1 = (cfo_phasor(0.1 + d, 16) - cfo_phasor(0.1 - d, 16)) / (2 * d)
    fd2 = (cfo_phasor_derivatives(0.1 + d, 16)[0] - cfo_phasor_derivatives(0.1 - d, 16)[0]) / (2 * d)
    err = max(np.max(np.abs(fd1 - g1)), np.max(np.abs(fd2 - g2)))
    out.append(_check("CFO phasor derivatives", err < 1e-4, f"max err {err:.2e}"))

    cfg = fec.make_code_config(6, 2, seed=seed, identity_ra_interleaver=True)
    lam = rng.normal(0.0, 1.5, cfg.coded_length)
    info_ref, chip_ref, ml_info, _, _ = code_posteriors(lam, cfg)
    info, chips = fec.sum_product_decode(lam, cfg)
    finite = np.isfinite(chip_ref)
    err = max(np.max(np.abs(info - info_ref)), np.max(np.abs(chips[finite] - chip_ref[finite])))
    _, ms_info = fec.min_sum_decode(lam, cfg)
    out.append(_check("sum-product marginals vs enumeration", err < 1e-8, f"max err {err:.2e}"))
    out.append(_check("min-sum vs ML enumeration", np.array_equal(ms_info, ml_info), "info word"))

    p = rng.uniform(0.05, 0.95, 6)
    H = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    mean, _ = soft_idft_enumeration(p, H)
    err = np.max(np.abs(idft((2 * p - 1) * H) - mean))
    out.append(_check("soft IDFT mean vs enumeration", err < 1e-10, f"max err {err:.2e}"))

    n, m = 16, 3
    rr = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
    grid = rng.uniform(-1, 1, (m, n))
    h = np.zeros(n, complex)
    h[:4] = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    phases = rng.uniform(-np.pi, np.pi, m)
    m_y = idft(grid * dft(h))
    err = abs(q_function(rr, m_y, 0.13, phases) - q_samplewise(rr, grid, h, 0.13, phases))
    out.append(_check("Q two-path identity", err < 1e-9, f"abs err {err:.2e}"))

    theta = ecm_phase_update(rr[:1], m_y[:1], 0.13, np.zeros(1))[0]
    best = grid_argmax(lambda t: q_function(rr[:1], m_y[:1], 0.13, np.array([t])), -np.pi, np.pi, 1e-4)
    diff = abs(np.angle(np.exp(1j * (theta - best))))
    out.append(_check("phase update vs grid search", diff <= 1e-4, f"diff {diff:.2e}"))

    FrameConfig()  # default geometry must validate
    return out
