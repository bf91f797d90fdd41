"""Repeat-accumulate code with IDMA spreading, and its message-passing decoders.

Encoder chain for one user::

    info bits --repeat x3--> RA interleaver --> accumulator (running XOR)
        --repeat xU--> user interleaver --> chips

LLRs follow the convention ``log p(bit=0) / p(bit=1)``; BPSK maps bit 0 to +1.

The decoder runs message passing on the accumulator trellis. Consecutive
accumulator positions that carry copies of the same information bit are merged
into one trellis section, so a code whose inner interleaver keeps the three
copies adjacent (the identity interleaver) has a cycle-free factor graph and the
sum-product marginals are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

LLR_CLAMP = 50.0
# bound on section extrinsics; keeps inf - inf out of the trellis
EXT_CLAMP = 500.0
# exponent bound for the probability-domain kernel; products of two such
# factors stay inside double range
EXP_CLAMP = 300.0
RA_REPEAT = 3

# seed-derivation role codes
ROLE_RA_INTERLEAVER = 0
ROLE_USER_INTERLEAVER = 1


def random_permutation(n: int, seed: int, user_index: int, role: int) -> np.ndarray:
    """Fisher-Yates permutation seeded from ``(seed, user_index, role)``."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(user_index), int(role)]))
    return rng.permutation(n)


def interleave(seq: np.ndarray, perm: np.ndarray) -> np.ndarray:
    seq = np.asarray(seq)
    if seq.shape[-1] != len(perm):
        raise ValueError(f"sequence length {seq.shape[-1]} != permutation length {len(perm)}")
    return seq[..., perm]


def deinterleave(seq: np.ndarray, perm: np.ndarray) -> np.ndarray:
    seq = np.asarray(seq)
    if seq.shape[-1] != len(perm):
        raise ValueError(f"sequence length {seq.shape[-1]} != permutation length {len(perm)}")
    out = np.empty_like(seq)
    out[..., perm] = seq
    return out


@dataclass
class CodeConfig:
    """Static description of one user's code.

    ``ra_interleaver`` permutes the ``3J`` repeated bits ahead of the
    accumulator; ``user_interleaver`` permutes the ``3JU`` chips.
    """

    info_bits: int
    repetition: int
    ra_interleaver: np.ndarray
    user_interleaver: np.ndarray
    decoder_iterations: int = 20
    _sections: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.ra_interleaver = np.asarray(self.ra_interleaver, dtype=np.int64)
        self.user_interleaver = np.asarray(self.user_interleaver, dtype=np.int64)
        n_ra = RA_REPEAT * self.info_bits
        if self.info_bits < 1 or self.repetition < 1:
            raise ValueError("info_bits and repetition must be positive")
        for perm, n in ((self.ra_interleaver, n_ra), (self.user_interleaver, n_ra * self.repetition)):
            if len(perm) != n or not np.array_equal(np.sort(perm), np.arange(n)):
                raise ValueError(f"interleaver is not a permutation of range({n})")
        self._sections = _build_sections(self.ra_interleaver)

    @property
    def ra_length(self) -> int:
        return RA_REPEAT * self.info_bits

    @property
    def coded_length(self) -> int:
        return self.ra_length * self.repetition

    @property
    def rate(self) -> float:
        return 1.0 / (RA_REPEAT * self.repetition)


def make_code_config(
    info_bits: int,
    repetition: int,
    seed: int = 0,
    user_index: int = 0,
    decoder_iterations: int = 20,
    identity_ra_interleaver: bool = False,
) -> CodeConfig:
    n_ra = RA_REPEAT * info_bits
    if identity_ra_interleaver:
        ra_perm = np.arange(n_ra)
    else:
        ra_perm = random_permutation(n_ra, seed, user_index, ROLE_RA_INTERLEAVER)
    user_perm = random_permutation(n_ra * repetition, seed, user_index, ROLE_USER_INTERLEAVER)
    return CodeConfig(info_bits, repetition, ra_perm, user_perm, decoder_iterations)


def _build_sections(ra_perm: np.ndarray):
    owner = ra_perm // RA_REPEAT
    breaks = np.flatnonzero(np.diff(owner) != 0) + 1
    starts = np.concatenate(([0], breaks)).astype(np.int64)
    lengths = np.diff(np.concatenate((starts, [len(owner)]))).astype(np.int64)
    return starts, lengths, owner[starts].astype(np.int64)


def ra_encode(bits: np.ndarray, config: CodeConfig) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int8)
    if bits.shape != (config.info_bits,):
        raise ValueError(f"expected {config.info_bits} info bits, got shape {bits.shape}")
    repeated = interleave(np.repeat(bits, RA_REPEAT), config.ra_interleaver)
    return np.bitwise_xor.accumulate(repeated).astype(np.int8)


def idma_encode(bits: np.ndarray, config: CodeConfig) -> np.ndarray:
    """RA codeword, repeated ``U`` times per bit, then user-interleaved."""
    return interleave(np.repeat(ra_encode(bits, config), config.repetition), config.user_interleaver)


def bpsk(bits: np.ndarray) -> np.ndarray:
    return 1.0 - 2.0 * np.asarray(bits, dtype=np.float64)


def _chips_to_ra_llrs(channel_llrs: np.ndarray, config: CodeConfig) -> np.ndarray:
    channel_llrs = np.asarray(channel_llrs, dtype=np.float64)
    if channel_llrs.shape != (config.coded_length,):
        raise ValueError(f"expected {config.coded_length} chip LLRs, got shape {channel_llrs.shape}")
    llrs = np.clip(channel_llrs, -LLR_CLAMP, LLR_CLAMP)
    llrs = deinterleave(llrs, config.user_interleaver)
    return llrs.reshape(config.ra_length, config.repetition).sum(axis=1)


def _ra_to_chip_llrs(ra_llrs: np.ndarray, config: CodeConfig) -> np.ndarray:
    return interleave(np.repeat(ra_llrs, config.repetition), config.user_interleaver)


def sum_product_decode(channel_llrs: np.ndarray, config: CodeConfig) -> tuple[np.ndarray, np.ndarray]:
    """Soft decoding.

    Returns
    -------
    info_llrs : ndarray, shape (J,)
        Posterior LLRs of the information bits.
    chip_llrs : ndarray, shape (3JU,)
        Posterior (intrinsic + extrinsic) LLRs of every transmitted chip.
    """
    lam = _chips_to_ra_llrs(channel_llrs, config)
    starts, lengths, owners = config._sections
    info, ra_post = _ra_decode(lam, starts, lengths, owners, config.info_bits,
                               config.decoder_iterations, False)
    return info, _ra_to_chip_llrs(ra_post, config)


def min_sum_decode(channel_llrs: np.ndarray, config: CodeConfig) -> tuple[np.ndarray, np.ndarray]:
    """Max-product decoding; returns hard ``(chip_bits, info_bits)``.

    Both come from max-marginals, with ties resolved to 0. On a cycle-free
    code with a unique best codeword the chip decisions are that codeword; on
    a loopy code they need not form a codeword, but a wrong information bit
    then does not flip every accumulator output that depends on it.
    """
    lam = _chips_to_ra_llrs(channel_llrs, config)
    starts, lengths, owners = config._sections
    info, ra_post = _ra_decode(lam, starts, lengths, owners, config.info_bits,
                               config.decoder_iterations, True)
    info_bits = (info < 0).astype(np.int8)
    chips = (_ra_to_chip_llrs(ra_post, config) < 0).astype(np.int8)
    return chips, info_bits


def _ra_decode(lam, starts, lengths, owners, n_info, iterations, max_product):
    if max_product:
        return _ra_decode_max(lam, starts, lengths, owners, n_info, iterations)
    return _ra_decode_sum(lam, starts, lengths, owners, n_info, iterations)


@numba.njit(cache=True)
def _section_sums(lam, starts, lengths):
    # half sums of channel LLRs over even / odd offsets inside each section;
    # copies at even offsets flip the output when the input bit is 1
    n_sec = starts.shape[0]
    s_flip = np.zeros(n_sec)
    s_keep = np.zeros(n_sec)
    for j in range(n_sec):
        for i in range(lengths[j]):
            if i % 2 == 0:
                s_flip[j] += 0.5 * lam[starts[j] + i]
            else:
                s_keep[j] += 0.5 * lam[starts[j] + i]
    return s_flip, s_keep


@numba.njit(cache=True, error_model="numpy")
def _log_ratio(num, den):
    if num > 0.0 and den > 0.0:
        return np.log(num / den)
    if num > 0.0:
        return EXT_CLAMP
    if den > 0.0:
        return -EXT_CLAMP
    return 0.0


@numba.njit(cache=True, error_model="numpy")
def _ra_decode_sum(lam, starts, lengths, owners, n_info, iterations):
    """Sum-product in the normalized probability domain.

    Section weights for entry state s and input bit b factor as
    ``exp(+-A) exp(+-B)`` (channel, fixed) times ``exp(+-prior/2)``, so each
    iteration needs one exponential per section.
    """
    n_sec = starts.shape[0]
    s_flip, s_keep = _section_sums(lam, starts, lengths)
    e_a = np.empty(n_sec)
    e_b = np.empty(n_sec)
    for j in range(n_sec):
        e_a[j] = np.exp(min(max(s_flip[j] + s_keep[j], -EXP_CLAMP), EXP_CLAMP))
        e_b[j] = np.exp(min(max(s_keep[j] - s_flip[j], -EXP_CLAMP), EXP_CLAMP))
    ext = np.zeros(n_sec)
    total = np.zeros(n_info)
    post = np.zeros(lam.shape[0])
    alpha = np.empty((n_sec + 1, 2))
    beta = np.empty((n_sec + 1, 2))
    gamma = np.empty((n_sec, 4))  # (s,b) = (0,0), (1,0), (0,1), (1,1)
    prior = np.empty(n_sec)
    n_iter = max(iterations, 1)
    for it in range(n_iter):
        a0 = 1.0
        a1 = 0.0
        alpha[0, 0] = a0
        alpha[0, 1] = a1
        for j in range(n_sec):
            half = min(max(0.5 * (total[owners[j]] - ext[j]), -EXP_CLAMP), EXP_CLAMP)
            prior[j] = 2.0 * half
            e_h = np.exp(half)
            g00 = e_a[j] * e_h
            g10 = e_h / e_a[j]
            g01 = e_b[j] / e_h
            g11 = 1.0 / (e_b[j] * e_h)
            gamma[j, 0] = g00
            gamma[j, 1] = g10
            gamma[j, 2] = g01
            gamma[j, 3] = g11
            if lengths[j] % 2:
                n0 = a0 * g00 + a1 * g11
                n1 = a1 * g10 + a0 * g01
            else:
                n0 = a0 * (g00 + g01)
                n1 = a1 * (g10 + g11)
            norm = n0 + n1
            a0 = n0 / norm
            a1 = n1 / norm
            alpha[j + 1, 0] = a0
            alpha[j + 1, 1] = a1
        b0 = 1.0
        b1 = 1.0
        beta[n_sec, 0] = b0
        beta[n_sec, 1] = b1
        for j in range(n_sec - 1, -1, -1):
            if lengths[j] % 2:
                n0 = gamma[j, 0] * b0 + gamma[j, 2] * b1
                n1 = gamma[j, 1] * b1 + gamma[j, 3] * b0
            else:
                n0 = (gamma[j, 0] + gamma[j, 2]) * b0
                n1 = (gamma[j, 1] + gamma[j, 3]) * b1
            norm = n0 + n1
            b0 = n0 / norm
            b1 = n1 / norm
            beta[j, 0] = b0
            beta[j, 1] = b1
        last = it == n_iter - 1
        for j in range(n_sec):
            f = lengths[j] % 2
            w00 = alpha[j, 0] * gamma[j, 0] * beta[j + 1, 0]
            w10 = alpha[j, 1] * gamma[j, 1] * beta[j + 1, 1]
            w01 = alpha[j, 0] * gamma[j, 2] * beta[j + 1, f]
            w11 = alpha[j, 1] * gamma[j, 3] * beta[j + 1, 1 ^ f]
            num = w00 + w10
            den = w01 + w11
            if num > 0.0 and den > 0.0:
                e = np.log(num / den) - prior[j]
            elif num > 0.0:
                e = EXT_CLAMP
            elif den > 0.0:
                e = -EXT_CLAMP
            else:
                e = ext[j]
            ext[j] = min(max(e, -EXT_CLAMP), EXT_CLAMP)
            if last:
                # even offsets carry s ^ b, odd offsets carry s
                llr_flip = _log_ratio(w00 + w11, w10 + w01)
                llr_keep = _log_ratio(w00 + w01, w10 + w11)
                for i in range(lengths[j]):
                    post[starts[j] + i] = llr_flip if i % 2 == 0 else llr_keep
        total[:] = 0.0
        for j in range(n_sec):
            total[owners[j]] += ext[j]
    return total.copy(), post


@numba.njit(cache=True)
def _ra_decode_max(lam, starts, lengths, owners, n_info, iterations):
    """Max-product (min-sum) in the log domain."""
    n_sec = starts.shape[0]
    s_flip, s_keep = _section_sums(lam, starts, lengths)
    ext = np.zeros(n_sec)
    total = np.zeros(n_info)
    alpha = np.empty((n_sec + 1, 2))
    beta = np.empty((n_sec + 1, 2))
    g = np.empty((n_sec, 2, 2))
    post = np.zeros(lam.shape[0])
    n_iter = max(iterations, 1)
    for it in range(n_iter):
        for j in range(n_sec):
            half = 0.5 * (total[owners[j]] - ext[j])
            g[j, 0, 0] = s_flip[j] + s_keep[j] + half
            g[j, 1, 0] = -s_flip[j] - s_keep[j] + half
            g[j, 0, 1] = -s_flip[j] + s_keep[j] - half
            g[j, 1, 1] = s_flip[j] - s_keep[j] - half
        alpha[0, 0] = 0.0
        alpha[0, 1] = -np.inf
        for j in range(n_sec):
            f = lengths[j] % 2
            a0 = -np.inf
            a1 = -np.inf
            for s in range(2):
                v0 = alpha[j, s] + g[j, s, 0]
                v1 = alpha[j, s] + g[j, s, 1]
                if s == 0:
                    a0 = max(a0, v0)
                    if f:
                        a1 = max(a1, v1)
                    else:
                        a0 = max(a0, v1)
                else:
                    a1 = max(a1, v0)
                    if f:
                        a0 = max(a0, v1)
                    else:
                        a1 = max(a1, v1)
            norm = max(a0, a1)
            alpha[j + 1, 0] = a0 - norm
            alpha[j + 1, 1] = a1 - norm
        beta[n_sec, 0] = 0.0
        beta[n_sec, 1] = 0.0
        for j in range(n_sec - 1, -1, -1):
            f = lengths[j] % 2
            b0 = max(g[j, 0, 0] + beta[j + 1, 0], g[j, 0, 1] + beta[j + 1, f])
            b1 = max(g[j, 1, 0] + beta[j + 1, 1], g[j, 1, 1] + beta[j + 1, 1 ^ f])
            norm = max(b0, b1)
            beta[j, 0] = b0 - norm
            beta[j, 1] = b1 - norm
        for j in range(n_sec):
            f = lengths[j] % 2
            e0 = max(alpha[j, 0] + g[j, 0, 0] + beta[j + 1, 0], alpha[j, 1] + g[j, 1, 0] + beta[j + 1, 1])
            e1 = max(alpha[j, 0] + g[j, 0, 1] + beta[j + 1, f], alpha[j, 1] + g[j, 1, 1] + beta[j + 1, 1 ^ f])
            e = e0 - e1 - (total[owners[j]] - ext[j])
            ext[j] = min(max(e, -EXT_CLAMP), EXT_CLAMP)
            if it == n_iter - 1:
                w00 = alpha[j, 0] + g[j, 0, 0] + beta[j + 1, 0]
                w10 = alpha[j, 1] + g[j, 1, 0] + beta[j + 1, 1]
                w01 = alpha[j, 0] + g[j, 0, 1] + beta[j + 1, f]
                w11 = alpha[j, 1] + g[j, 1, 1] + beta[j + 1, 1 ^ f]
                m_flip = max(w00, w11) - max(w10, w01)
                m_keep = max(w00, w01) - max(w10, w11)
                for i in range(lengths[j]):
                    post[starts[j] + i] = m_flip if i % 2 == 0 else m_keep
        total[:] = 0.0
        for j in range(n_sec):
            total[owners[j]] += ext[j]
    return total.copy(), post
