"""Multiuser received-signal synthesis in the post-CP block model.

Each block of ``N`` samples (after CP removal) is

    r_m = sum_u exp(j theta_{u,m}) Gamma(eps_u) F^H D(X_{u,m}) F h_u + n_m

with ``h_u`` the length-N composite channel (timing offset zeros, then the
multipath taps). The model holds as long as every composite channel fits in
the cyclic prefix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .framing import FrameConfig
from .numerics import cfo_phasor, complex_normal, dft, idft


@dataclass
class UserImpairments:
    """Ground truth for one user.

    ``phases`` holds ``theta_{u,m}`` for every block ``m = 1..M`` (index
    ``m - 1``), unwrapped.
    """

    cfo: float
    phases: np.ndarray
    taps: np.ndarray
    delay: int
    n_fft: int

    @property
    def h(self) -> np.ndarray:
        """Composite channel ``[0]*delay + taps`` zero-padded to ``N``."""
        out = np.zeros(self.n_fft, dtype=complex)
        out[self.delay: self.delay + len(self.taps)] = self.taps
        return out

    @property
    def support(self) -> int:
        return self.delay + len(self.taps)


def power_delay_profile(n_taps: int) -> np.ndarray:
    """Tap variances ``beta exp(-(l-1)/L)``, normalized to unit sum."""
    if n_taps < 1:
        raise ValueError(f"need at least one tap, got {n_taps}")
    p = np.exp(-np.arange(n_taps) / n_taps)
    return p / p.sum()


def draw_channel(n_taps: int, rng: np.random.Generator) -> np.ndarray:
    """Rayleigh taps with an exponentially decaying power profile."""
    return complex_normal(rng, n_taps) * np.sqrt(power_delay_profile(n_taps))


def phase_drift_schedule(cfo: float, config: FrameConfig, phase_noise_std: float = 0.0,
                         rng: np.random.Generator | None = None) -> np.ndarray:
    """``theta_m = 2 pi eps (N_cp + m N_s) / N`` for ``m = 1..M``, plus optional random walk."""
    if not np.isfinite(cfo):
        raise ValueError(f"CFO must be finite, got {cfo}")
    if phase_noise_std < 0:
        raise ValueError("phase_noise_std must be nonnegative")
    m = np.arange(1, config.n_blocks + 1)
    theta = 2 * np.pi * cfo * (config.n_cp + m * config.symbol_length) / config.n_fft
    if phase_noise_std > 0:
        if rng is None:
            raise ValueError("phase noise needs an rng")
        theta = theta + np.cumsum(rng.normal(0.0, phase_noise_std, config.n_blocks))
    return theta


def check_loose_sync(impairments: list[UserImpairments], config: FrameConfig) -> None:
    for u, imp in enumerate(impairments):
        if imp.delay < 0 or imp.support > config.n_cp:
            raise ValueError(
                f"user {u}: delay {imp.delay} + {len(imp.taps)} taps exceeds the cyclic prefix {config.n_cp}"
            )


def draw_impairments(
    config: FrameConfig,
    rho: float,
    rng: np.random.Generator,
    n_taps: int = 4,
    max_delay: int = 9,
    phase_noise_std: float = 0.0,
    power_offsets_db=None,
    cfos=None,
) -> list[UserImpairments]:
    """Random per-user impairments.

    CFOs are ``+rho`` or ``-rho`` with equal probability unless ``cfos`` fixes
    them. User 0 has zero delay; the others draw uniformly from
    ``0..max_delay``.
    """
    if max_delay + n_taps > config.n_cp:
        raise ValueError(f"max_delay {max_delay} + {n_taps} taps exceeds the cyclic prefix {config.n_cp}")
    gains_db = np.zeros(config.n_users) if power_offsets_db is None else np.asarray(power_offsets_db, float)
    if gains_db.shape != (config.n_users,):
        raise ValueError("power_offsets_db needs one entry per user")
    if cfos is not None and len(cfos) != config.n_users:
        raise ValueError("cfos needs one entry per user")
    out = []
    for u in range(config.n_users):
        eps = float(cfos[u]) if cfos is not None else float(rho * rng.choice((-1.0, 1.0)))
        delay = 0 if u == 0 else int(rng.integers(0, max_delay + 1))
        taps = draw_channel(n_taps, rng) * 10 ** (gains_db[u] / 20)
        theta = phase_drift_schedule(eps, config, phase_noise_std, rng)
        out.append(UserImpairments(eps, theta, taps, delay, config.n_fft))
    return out


def noise_variance(snr_db: float, config: FrameConfig) -> float:
    """Complex noise variance per sample for a given ``E_b/N_0`` in dB.

    A unit-energy channel puts ``E_s = 1/N`` on each data subcarrier; each
    data subcarrier carries ``R`` information bits, so ``E_b = E_s / R``.
    Pilot, preamble and CP energy are not charged to ``E_b``.
    """
    e_s = 1.0 / config.n_fft
    return e_s / (config.rate * 10 ** (snr_db / 10))


def user_signal(frame: np.ndarray, imp: UserImpairments) -> np.ndarray:
    """Noiseless contribution of one user, shape ``(M, N)``."""
    y = idft(frame * dft(imp.h))
    return np.exp(1j * imp.phases)[:, None] * cfo_phasor(imp.cfo, imp.n_fft) * y


def synthesize_received(
    frames: np.ndarray,
    impairments: list[UserImpairments],
    config: FrameConfig,
    noise_var: float = 0.0,
    rng: np.random.Generator | None = None,
    noise: np.ndarray | None = None,
) -> np.ndarray:
    """Received blocks ``r`` of shape ``(M, N)``.

    Noise is ``sqrt(noise_var)`` times ``noise`` when a unit-variance draw is
    supplied (common random numbers across SNR points), else a fresh draw
    from ``rng``.
    """
    frames = np.asarray(frames)
    if frames.shape != (config.n_users, config.n_blocks, config.n_fft):
        raise ValueError(f"frames must have shape {(config.n_users, config.n_blocks, config.n_fft)}")
    if len(impairments) != config.n_users:
        raise ValueError("need one UserImpairments per user")
    check_loose_sync(impairments, config)
    r = sum(user_signal(frames[u], impairments[u]) for u in range(config.n_users))
    if noise_var < 0:
        raise ValueError("noise variance must be nonnegative")
    if noise_var > 0:
        if noise is None:
            if rng is None:
                raise ValueError("noise needs an rng or an explicit draw")
            noise = complex_normal(rng, r.shape)
        r = r + np.sqrt(noise_var) * noise
    return r
