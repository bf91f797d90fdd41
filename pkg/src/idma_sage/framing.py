"""Frame geometry and the per-user transmit grid.

Subcarriers are addressed by FFT bin (0..N-1). Logical frequency ``k`` in
``-N/2 .. N/2-1`` lives at bin ``k mod N``. Under the centered DFT convention
bin ``p`` of ``F x`` is frequency ``p - N/2`` shifted by ``N/2``; the sign flip
in :func:`idma_sage.numerics.dft` absorbs that shift, so bins can be treated
as ordinary FFT bins.

A frame has ``M = 2U + M'`` blocks. User ``u`` (0-based) sends two copies of
the training block in blocks ``2u`` and ``2u + 1`` and is silent in the other
preamble blocks. The ``M'`` data blocks carry chips on the shared data
subcarriers plus the user's own two pilots (fixed to 1).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from . import fec
from .numerics import idft

# 802.11a long training sequence for logical frequencies -26..26 (DC = 0)
LTS = np.array(
    [1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1,
     0,
     1, -1, -1, 1, 1, -1, 1, -1, 1, -1, -1, -1, -1, -1, 1, 1, -1, -1, 1, -1, 1, -1, 1, 1, 1, 1],
    dtype=np.float64,
)

# pilot pairs in logical frequency, one pair per user; the first two pairs are
# the 802.11a pilot positions, the rest extend outward into the guard band
PILOT_PAIRS = ((-21, 7), (-7, 21), (-27, 27), (-28, 28), (-29, 29), (-30, 30), (-31, 31))

_LTS_HALF_WIDTH = 26
_DATA_FREQS = np.array([k for k in range(-26, 27) if k not in (0, -21, -7, 7, 21)])


@dataclass(frozen=True)
class FrameConfig:
    """Static frame geometry shared by every user.

    Parameters
    ----------
    n_users:
        Number of users ``U``.
    info_bits:
        Payload length ``J`` per user.
    repetition:
        IDMA repetition factor; ``None`` means ``U``.
    code_seed:
        Seed for the RA and user interleavers.
    """

    n_users: int = 2
    n_fft: int = 64
    n_cp: int = 16
    info_bits: int = 240
    repetition: int | None = None
    decoder_iterations: int = 20
    code_seed: int = 0

    def __post_init__(self):
        if self.n_users < 1 or self.n_users > len(PILOT_PAIRS):
            raise ValueError(f"n_users must be in 1..{len(PILOT_PAIRS)}, got {self.n_users}")
        if self.n_fft != 64:
            raise ValueError("the subcarrier plan is defined for n_fft = 64 only")
        if not 0 <= self.n_cp < self.n_fft:
            raise ValueError(f"n_cp must be in [0, n_fft), got {self.n_cp}")
        if self.info_bits < 1 or self.decoder_iterations < 1:
            raise ValueError("info_bits and decoder_iterations must be positive")
        if self.repetition is not None and self.repetition < 1:
            raise ValueError("repetition must be positive")

    @property
    def spreading(self) -> int:
        return self.n_users if self.repetition is None else self.repetition

    @property
    def symbol_length(self) -> int:
        """``N_s = N + N_cp``."""
        return self.n_fft + self.n_cp

    @property
    def coded_length(self) -> int:
        return fec.RA_REPEAT * self.info_bits * self.spreading

    @property
    def rate(self) -> float:
        return 1.0 / (fec.RA_REPEAT * self.spreading)

    @property
    def data_bins(self) -> np.ndarray:
        return np.mod(_DATA_FREQS, self.n_fft)

    @property
    def n_data_subcarriers(self) -> int:
        return len(_DATA_FREQS)

    @property
    def n_preamble_blocks(self) -> int:
        return 2 * self.n_users

    @property
    def n_data_blocks(self) -> int:
        """``M'``: blocks needed to carry every chip."""
        return -(-self.coded_length // self.n_data_subcarriers)

    @property
    def n_blocks(self) -> int:
        return self.n_preamble_blocks + self.n_data_blocks

    @property
    def n_padding(self) -> int:
        return self.n_data_blocks * self.n_data_subcarriers - self.coded_length

    @property
    def data_blocks(self) -> np.ndarray:
        return np.arange(self.n_preamble_blocks, self.n_blocks)

    def preamble_blocks(self, user: int) -> np.ndarray:
        self._check_user(user)
        return np.array([2 * user, 2 * user + 1])

    def active_blocks(self, user: int) -> np.ndarray:
        """Blocks in which ``user`` transmits: its preamble pair, then all data blocks."""
        return np.concatenate((self.preamble_blocks(user), self.data_blocks))

    def pilot_bins(self, user: int) -> np.ndarray:
        self._check_user(user)
        return np.mod(np.array(PILOT_PAIRS[user]), self.n_fft)

    def code(self, user: int) -> fec.CodeConfig:
        self._check_user(user)
        return _code_config(self.info_bits, self.spreading, self.code_seed, user, self.decoder_iterations)

    def _check_user(self, user: int) -> None:
        if not 0 <= user < self.n_users:
            raise ValueError(f"user index {user} out of range for {self.n_users} users")


@functools.lru_cache(maxsize=64)
def _code_config(info_bits, repetition, seed, user, iterations) -> fec.CodeConfig:
    return fec.make_code_config(info_bits, repetition, seed=seed, user_index=user,
                                decoder_iterations=iterations)


def training_block(config: FrameConfig) -> np.ndarray:
    """The LTS as a length-N frequency-domain vector in bin order."""
    out = np.zeros(config.n_fft)
    freqs = np.arange(-_LTS_HALF_WIDTH, _LTS_HALF_WIDTH + 1)
    out[np.mod(freqs, config.n_fft)] = LTS
    return out


def training_bins(config: FrameConfig) -> np.ndarray:
    """Bins on which the training block is nonzero."""
    return np.flatnonzero(training_block(config))


def known_grid(config: FrameConfig, user: int) -> np.ndarray:
    """Frame grid of ``user`` holding only the known symbols; data cells are 0."""
    grid = np.zeros((config.n_blocks, config.n_fft))
    grid[config.preamble_blocks(user)] = training_block(config)
    grid[np.ix_(config.data_blocks, config.pilot_bins(user))] = 1.0
    return grid


def place_data(grid: np.ndarray, symbols: np.ndarray, config: FrameConfig, padding: float = 1.0) -> np.ndarray:
    """Write one value per chip into the data cells of the trailing ``M'`` rows of ``grid``.

    ``grid`` may hold all ``M`` blocks or only the ``M'`` data blocks. Cells
    past the last chip receive ``padding``.
    """
    symbols = np.asarray(symbols)
    if symbols.shape != (config.coded_length,):
        raise ValueError(f"expected {config.coded_length} chip values, got shape {symbols.shape}")
    cells = np.full(config.n_data_blocks * config.n_data_subcarriers, padding, dtype=grid.dtype)
    cells[: config.coded_length] = symbols
    rows = grid[-config.n_data_blocks:]
    rows[:, config.data_bins] = cells.reshape(config.n_data_blocks, config.n_data_subcarriers)
    return grid


def read_data(grid: np.ndarray, config: FrameConfig) -> np.ndarray:
    """Inverse of :func:`place_data`: chip-ordered values, padding dropped."""
    rows = grid[-config.n_data_blocks:]
    return rows[:, config.data_bins].reshape(-1)[: config.coded_length]


def build_frame(bits: np.ndarray, config: FrameConfig, user: int) -> np.ndarray:
    """BPSK frame grid ``X_u`` of shape ``(M, N)`` for one user's payload."""
    bits = np.asarray(bits)
    if bits.shape != (config.info_bits,):
        raise ValueError(f"expected {config.info_bits} payload bits, got shape {bits.shape}")
    chips = fec.idma_encode(bits, config.code(user))
    return place_data(known_grid(config, user), fec.bpsk(chips), config)


def ofdm_modulate(frame: np.ndarray, config: FrameConfig) -> np.ndarray:
    """Time-domain blocks with cyclic prefix, shape ``(M, N_s)``."""
    frame = np.asarray(frame)
    if frame.shape[-1] != config.n_fft:
        raise ValueError(f"frame rows must have {config.n_fft} subcarriers")
    x = idft(frame)
    return np.concatenate((x[..., config.n_fft - config.n_cp:], x), axis=-1)


def strip_cp(blocks: np.ndarray, config: FrameConfig) -> np.ndarray:
    if blocks.shape[-1] != config.symbol_length:
        raise ValueError(f"blocks must have {config.symbol_length} samples")
    return blocks[..., config.n_cp:]
