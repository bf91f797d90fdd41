"""One-shot parameter estimators and the frequency-domain evidence.

The preamble channel estimate absorbs the phase of the user's first training
block, so every phase estimate downstream is relative to that block.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from .framing import FrameConfig, training_bins, training_block
from .numerics import TransformCounter, cfo_phasor, dft, dft_matrix

CORRELATION_FLOOR = 1e-9
GAIN_FLOOR = 1e-12


class EstimationError(RuntimeError):
    """An estimator had too little signal to produce an estimate."""


@dataclass
class ParamEstimate:
    """Per-user estimate ``{eps, theta_m, h}``; ``phases`` spans all ``M`` blocks."""

    cfo: float
    phases: np.ndarray
    h: np.ndarray
    stalled: int = field(default=0, compare=False)

    @property
    def H(self) -> np.ndarray:
        return dft(self.h)

    def copy(self) -> "ParamEstimate":
        return ParamEstimate(self.cfo, self.phases.copy(), self.h.copy(), self.stalled)


@functools.lru_cache(maxsize=8)
def _tap_basis(n_fft: int, n_cp: int) -> np.ndarray:
    """Columns of ``F`` for the first ``N_cp`` taps, so that ``H = A @ h[:N_cp]``."""
    return dft_matrix(n_fft)[:, :n_cp]


def fit_taps(weights: np.ndarray, numer: np.ndarray, config: FrameConfig, ridge: float = 0.0) -> np.ndarray | None:
    """Minimize ``sum_k w_k |H_k|^2 - 2 Re(conj(H_k) b_k) + ridge ||h||^2`` over ``N_cp``-tap channels.

    With ``w_k = sum_m |S_mk|^2`` and ``b_k = sum_m conj(S_mk) R_mk`` and
    ``ridge = 0`` this is the least-squares fit of ``R_m = D(S_m) F h``. A
    positive ``ridge`` (noise variance over prior tap variance) gives the
    LMMSE fit, which stops the near-null out-of-band tap directions from
    amplifying noise. Returns ``None`` if the normal equations are singular.
    """
    a = _tap_basis(config.n_fft, config.n_cp)
    gram = (a.conj().T * weights) @ a + ridge * np.eye(config.n_cp)
    rhs = a.conj().T @ numer
    if np.linalg.cond(gram) > 1e10:
        return None
    h = np.zeros(config.n_fft, dtype=complex)
    h[: config.n_cp] = np.linalg.solve(gram, rhs)
    return h


def tap_ridge(noise_var: float, weights: np.ndarray, gains: np.ndarray, config: FrameConfig) -> float:
    """Ridge weight ``noise_var / p`` with ``p`` the per-tap energy implied by ``gains = |H_k|^2``.

    The channel energy is spread evenly over the ``N_cp`` taps of the prior.
    """
    if noise_var <= 0:
        return 0.0
    mean_gain = float(np.sum(weights * gains) / np.sum(weights))
    per_tap = mean_gain * config.n_fft / config.n_cp
    return noise_var / max(per_tap, 1e-300)


def preamble_cfo_estimate(block_a: np.ndarray, block_b: np.ndarray, config: FrameConfig) -> float:
    """Delay-correlation CFO estimate from two identical training blocks.

    Unambiguous for ``|eps| < N / (2 N_s)``.
    """
    corr = np.vdot(block_a, block_b)
    if abs(corr) < CORRELATION_FLOOR:
        raise EstimationError(f"preamble correlation {abs(corr):.3g} too small")
    return float(config.n_fft / (2 * np.pi * config.symbol_length) * np.angle(corr))


def preamble_channel_estimate(
    block_a: np.ndarray,
    block_b: np.ndarray,
    cfo: float,
    config: FrameConfig,
    training: np.ndarray | None = None,
    counter: TransformCounter | None = None,
) -> np.ndarray:
    """Composite channel from the two training blocks.

    Both blocks are CFO-compensated and transformed, the second is rotated
    back by the inter-block drift, and the average is divided by the training
    symbols. The taps are the least-squares fit over the used bins with
    support restricted to the first ``N_cp`` samples.
    """
    if training is None:
        training = training_block(config)
    used = training_bins(config)
    if np.any(training[used] == 0):
        raise ValueError("training symbol is zero on a used bin")
    comp = cfo_phasor(-cfo, config.n_fft)
    spectra = dft(np.stack((block_a, block_b)) * comp)
    if counter is not None:
        counter.add("preamble", 2)
    drift = np.exp(-2j * np.pi * cfo * config.symbol_length / config.n_fft)
    avg = 0.5 * (spectra[0] + drift * spectra[1])
    weights = np.zeros(config.n_fft)
    weights[used] = 1.0
    numer = np.zeros(config.n_fft, dtype=complex)
    numer[used] = avg[used] / training[used]
    # per-bin noise of the average, from the mismatch between the two copies
    diff = (spectra[0] - drift * spectra[1])[used] / training[used]
    noise = 0.25 * float(np.mean(np.abs(diff) ** 2))
    gains = np.maximum(np.abs(numer) ** 2 - noise, 0.0)
    h = fit_taps(weights, numer, config, tap_ridge(noise, weights, gains, config))
    if h is None:
        raise EstimationError("training bins do not determine the channel taps")
    return h


def pilot_phase_estimate(spectra: np.ndarray, H: np.ndarray, pilot_bins: np.ndarray) -> np.ndarray:
    """``angle(sum_i conj(H_i) R_{m,i})`` over the pilot bins, per block (pilots are 1)."""
    if len(pilot_bins) == 0:
        raise ValueError("need at least one pilot")
    hp = H[pilot_bins]
    if np.all(np.abs(hp) < GAIN_FLOOR):
        raise EstimationError("all pilot channel gains vanish")
    return np.angle(np.asarray(spectra)[..., pilot_bins] @ hp.conj())


def evidence_llrs(spectra: np.ndarray, H: np.ndarray, phases: np.ndarray, sigma2: float) -> np.ndarray:
    """BPSK LLRs ``4 Re(exp(-j theta_m) conj(H_i) R_{m,i}) / sigma2`` for every cell."""
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    rot = np.exp(-1j * np.asarray(phases))[..., None]
    return 4.0 * np.real(rot * H.conj() * spectra) / sigma2


def residual_power(spectra: np.ndarray, H: np.ndarray, data_bins: np.ndarray) -> float:
    """``mean |R|^2 - mean |H|^2`` over the data cells; may be negative."""
    gain = np.mean(np.abs(H[data_bins]) ** 2)
    return float(np.mean(np.abs(np.asarray(spectra)[..., data_bins]) ** 2) - gain)


def estimate_sigma_in(spectra: np.ndarray, H: np.ndarray, data_bins: np.ndarray) -> float:
    """Residual interference-plus-noise power over the data cells, floored."""
    gain = np.mean(np.abs(H[data_bins]) ** 2)
    return float(max(residual_power(spectra, H, data_bins), 1e-6 * gain, 1e-12))


def one_shot_estimate(r: np.ndarray, config: FrameConfig, user: int,
                      counter: TransformCounter | None = None) -> ParamEstimate:
    """CFO and channel from the user's preamble, data-block phases from its pilots.

    Pilot phases are read from the raw received blocks; other users are not
    cancelled.
    """
    a, b = r[config.preamble_blocks(user)]
    cfo = preamble_cfo_estimate(a, b, config)
    h = preamble_channel_estimate(a, b, cfo, config, counter=counter)
    phases = np.zeros(config.n_blocks)
    phases[2 * user + 1] = 2 * np.pi * cfo * config.symbol_length / config.n_fft
    spectra = dft(r[config.data_blocks] * cfo_phasor(-cfo, config.n_fft))
    if counter is not None:
        counter.add("init", config.n_data_blocks)
        counter.add("channel", 1)
    phases[config.data_blocks] = pilot_phase_estimate(spectra, dft(h), config.pilot_bins(user))
    return ParamEstimate(cfo, phases, h)
