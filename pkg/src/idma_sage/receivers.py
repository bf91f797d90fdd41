"""Multiuser receivers.

Four receivers share one skeleton:

* ``sage_ecm``: SAGE over users. Each user cycle runs ``Z`` ECM iterations.
  An iteration is an E-step (sum-product decode, soft IDFT), then CFO, phase
  and channel updates.
* ``sage_minsum``: the same loop with min-sum hard decisions standing in for
  the posterior means.
* ``one_shot`` / ``full_csi``: parallel-style interference cancellation with
  fixed parameters, taken from the preambles/pilots or from ground truth.

Every receiver starts with the other users' components built from their
known symbols only (preamble, pilots; data cells 0), so the first decode of
user 0 is identical across receivers that share the one-shot estimates.
SAGE receivers re-read a user's pilot phases whenever another user has been
decoded for the first time since the last read, with only the decoded users
cancelled (``reread_pilots``). For two users that is user 1 in the first pass
and user 0 in the second. The user's ECM cycle then runs from both the
current and the re-read phases, and the one ending at the larger objective is
kept.

Transforms are tallied on a :class:`~idma_sage.numerics.TransformCounter`.
Core tags are the preamble transforms, the per-iteration decode FFTs on the
data blocks, and the per-iteration IFFT of the symbol means (SAGE) or of
the hard-decision reconstruction (IC). Everything else is tagged separately.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fec
from .channel import UserImpairments
from .estimation import (
    ParamEstimate,
    estimate_sigma_in,
    evidence_llrs,
    fit_taps,
    one_shot_estimate,
    pilot_phase_estimate,
    residual_power,
    tap_ridge,
)
from .framing import FrameConfig, known_grid, place_data, read_data
from .numerics import TransformCounter, cfo_phasor, dft, idft, wrap_phase
from .softidft import soft_idft_mean, symbol_means, symbol_posterior_mean

RECEIVER_KINDS = ("full_csi", "one_shot", "sage_minsum", "sage_ecm")
CURVATURE_FLOOR = 1e-12
PHASE_FLOOR = 1e-12


@dataclass(frozen=True)
class ReceiverConfig:
    """Iteration budget and numerical guards for one receiver."""

    kind: str = "sage_ecm"
    sage_iterations: int = 10
    ecm_iterations: int = 20
    newton_step_limit: float = 0.05
    max_backtracks: int = 5
    reread_pilots: bool = True

    def __post_init__(self):
        if self.kind not in RECEIVER_KINDS:
            raise ValueError(f"unknown receiver kind {self.kind!r}; expected one of {RECEIVER_KINDS}")
        if self.sage_iterations < 1 or self.ecm_iterations < 1:
            raise ValueError("sage_iterations and ecm_iterations must be at least 1")
        if self.newton_step_limit <= 0 or self.max_backtracks < 0:
            raise ValueError("invalid Newton guard settings")


@dataclass
class ReceiverResult:
    bits: np.ndarray
    info_llrs: np.ndarray | None
    estimates: list[ParamEstimate]
    counter: TransformCounter
    trace: list[dict] = field(default_factory=list)


@dataclass
class EStepResult:
    """Beliefs from one E-step over a user's active blocks.

    ``grid`` holds the symbol means (or hard symbols) for every active block,
    known symbols included; ``m_y`` is its time-domain image through the
    current channel.
    """

    info_llrs: np.ndarray | None
    info_bits: np.ndarray
    grid: np.ndarray
    m_y: np.ndarray
    sigma2: float
    residual: float


class UserView:
    """Row bookkeeping for one user: active blocks and the known-symbol template."""

    def __init__(self, config: FrameConfig, user: int):
        self.user = user
        self.blocks = config.active_blocks(user)
        self.template = known_grid(config, user)[self.blocks]
        self.code = config.code(user)


# ---------------------------------------------------------------------------
# building blocks


def sage_e_step(r: np.ndarray, components: np.ndarray, user: int) -> np.ndarray:
    """``r`` minus every other user's current component."""
    others = [v for v in range(components.shape[0]) if v != user]
    out = np.array(r, dtype=complex, copy=True)
    for v in others:
        out -= components[v]
    return out


def reconstruct_component(est: ParamEstimate, grid: np.ndarray, blocks: np.ndarray,
                          H: np.ndarray | None = None) -> np.ndarray:
    """``exp(j theta_m) Gamma(eps) F^H D(grid_m) F h`` for each listed block."""
    if H is None:
        H = est.H
    y = idft(grid * H)
    return np.exp(1j * est.phases[blocks])[:, None] * cfo_phasor(est.cfo, grid.shape[-1]) * y


def q_function(rr: np.ndarray, m_y: np.ndarray, cfo: float, phases: np.ndarray) -> float:
    """ECM objective over the given blocks, up to terms free of the parameters.

    ``sum_m 2 Re(r_m^H exp(j theta_m) Gamma(eps) m_y,m) - ||m_y,m||^2``
    """
    model = np.exp(1j * phases)[:, None] * cfo_phasor(cfo, rr.shape[-1]) * m_y
    return float(2 * np.real(np.vdot(rr, model)) - np.vdot(m_y, m_y).real)


def _cfo_profile(rr: np.ndarray, m_y: np.ndarray, phases: np.ndarray) -> np.ndarray:
    # c_n such that the eps-dependent part of Q is 2 Re sum_n c_n exp(j 2 pi eps n / N)
    return np.einsum("mn,mn->n", rr.conj(), np.exp(1j * phases)[:, None] * m_y)


def _cfo_value(c: np.ndarray, cfo: float) -> float:
    return float(2 * np.real(np.dot(c, cfo_phasor(cfo, len(c)))))


def ecm_cfo_update(rr: np.ndarray, m_y: np.ndarray, phases: np.ndarray, cfo: float,
                   step_limit: float = 0.05, max_backtracks: int = 5) -> tuple[float, bool]:
    """One clamped Newton step on the CFO.

    Returns ``(cfo_new, stalled)``. The step is skipped (stalled) when the
    objective is not locally concave, and halved until the objective does not
    decrease.
    """
    c = _cfo_profile(rr, m_y, phases)
    n = c.shape[0]
    w = 2 * np.pi * np.arange(n) / n
    g = c * cfo_phasor(cfo, n)
    first = float(2 * np.real(np.sum(1j * w * g)))
    second = float(-2 * np.real(np.sum(w**2 * g)))
    if not -second > CURVATURE_FLOOR:
        return cfo, True
    step = float(np.clip(-first / second, -step_limit, step_limit))
    base = _cfo_value(c, cfo)
    for _ in range(max_backtracks + 1):
        if _cfo_value(c, cfo + step) >= base:
            return cfo + step, False
        step *= 0.5
    return cfo, False


def ecm_phase_update(rr: np.ndarray, m_y: np.ndarray, cfo: float, prev: np.ndarray) -> np.ndarray:
    """``angle((Gamma(eps) m_y,m)^H r_m)`` per block; blocks with no model energy keep ``prev``."""
    v = cfo_phasor(cfo, rr.shape[-1]) * m_y
    z = np.einsum("mn,mn->m", v.conj(), rr)
    return np.where(np.abs(z) >= PHASE_FLOOR, np.angle(z), prev)


def ecm_channel_update(rr: np.ndarray, grid: np.ndarray, cfo: float, phases: np.ndarray,
                       prev_h: np.ndarray, config: FrameConfig,
                       counter: TransformCounter | None = None,
                       noise_var: float = 0.0) -> tuple[np.ndarray, bool]:
    """Channel update given CFO, phases and symbol grid.

    With ``noise_var = 0`` this is the least-squares maximizer of the
    objective over channels supported on ``N_cp`` taps. A positive
    ``noise_var`` adds the Gaussian tap prior used by the preamble estimate
    (scaled to the energy of ``prev_h``). Returns ``(h, ok)``; ``ok`` is False
    when the symbol energy cannot pin down the taps, in which case ``prev_h``
    is returned.
    """
    spectra = np.exp(-1j * phases)[:, None] * dft(rr * cfo_phasor(-cfo, rr.shape[-1]))
    if counter is not None:
        counter.add("channel_update", rr.shape[0])
    grid = np.asarray(grid)
    numer = np.sum(grid.conj() * spectra, axis=0)
    weights = np.sum(np.abs(grid) ** 2, axis=0)
    ridge = tap_ridge(noise_var, weights, np.abs(dft(prev_h)) ** 2, config) if noise_var > 0 else 0.0
    h = fit_taps(weights, numer, config, ridge)
    if h is None:
        return prev_h.copy(), False
    return h, True


def ecm_e_step(rr: np.ndarray, est: ParamEstimate, view: UserView, config: FrameConfig,
               counter: TransformCounter | None = None, soft: bool = True) -> EStepResult:
    """Decode from the current estimates and map the beliefs back to time domain.

    ``rr`` covers the user's active blocks (two preamble rows, then data).
    ``soft=False`` swaps sum-product posteriors for min-sum hard decisions.
    """
    count = counter.add if counter is not None else (lambda *a: None)
    n_pre = 2
    H = est.H
    count("channel", 1)
    spectra = dft(rr[n_pre:] * cfo_phasor(-est.cfo, config.n_fft))
    count("decode", config.n_data_blocks)
    residual = residual_power(spectra, H, config.data_bins)
    sigma2 = estimate_sigma_in(spectra, H, config.data_bins)
    llrs = evidence_llrs(spectra, H, est.phases[config.data_blocks], sigma2)
    chip_llrs = read_data(llrs, config)
    if soft:
        info_llrs, app = fec.sum_product_decode(chip_llrs, view.code)
        symbols = symbol_means(app)
        info_bits = (info_llrs < 0).astype(np.int8)
    else:
        chips, info_bits = fec.min_sum_decode(chip_llrs, view.code)
        info_llrs = None
        symbols = fec.bpsk(chips)
    grid = place_data(view.template.copy(), symbols, config)
    m_y = soft_idft_mean(symbol_posterior_mean(grid, H))
    count("preamble_refine", n_pre)
    count("soft_idft", config.n_data_blocks)
    return EStepResult(info_llrs, info_bits, grid, m_y, sigma2, residual)


def ecm_m_step(rr: np.ndarray, e: EStepResult, est: ParamEstimate, view: UserView,
               config: FrameConfig, rcfg: ReceiverConfig,
               counter: TransformCounter | None = None) -> ParamEstimate:
    """CFO, then phases, then channel, each conditioned on the latest values."""
    blocks = view.blocks
    cfo, stalled = ecm_cfo_update(rr, e.m_y, est.phases[blocks], est.cfo,
                                  rcfg.newton_step_limit, rcfg.max_backtracks)
    phases = est.phases.copy()
    phases[blocks] = ecm_phase_update(rr, e.m_y, cfo, est.phases[blocks])
    h, ok = ecm_channel_update(rr, e.grid, cfo, phases[blocks], est.h, config, counter,
                               noise_var=max(e.residual, 0.0))
    return ParamEstimate(cfo, phases, h, est.stalled + int(stalled) + int(not ok))


# ---------------------------------------------------------------------------
# receivers


def reread_pilot_phases(r: np.ndarray, est: ParamEstimate, config: FrameConfig, user: int,
                        counter: TransformCounter | None = None) -> ParamEstimate:
    """Data-block phases from the user's pilots in ``r`` (full frame), keeping CFO and channel."""
    spectra = dft(r[config.data_blocks] * cfo_phasor(-est.cfo, config.n_fft))
    if counter is not None:
        counter.add("init", config.n_data_blocks)
        counter.add("channel", 1)
    phases = est.phases.copy()
    phases[config.data_blocks] = pilot_phase_estimate(spectra, est.H, config.pilot_bins(user))
    return ParamEstimate(est.cfo, phases, est.h, est.stalled)


def _ecm_cycle(rr, est, view, config, rcfg, counter, soft, k, truth, diagnostics):
    """``Z`` ECM iterations for one user; returns ``(est, last E-step, final Q, trace rows)``."""
    rows = []
    for z in range(1, rcfg.ecm_iterations + 1):
        e = ecm_e_step(rr, est, view, config, counter, soft=soft)
        est = ecm_m_step(rr, e, est, view, config, rcfg, counter)
        if diagnostics:
            rows.append(_trace_row(k, z, view.user, est, e, rr, view, truth))
    return est, e, q_function(rr, e.m_y, est.cfo, est.phases[view.blocks]), rows


def _initial_components(r, ests, views, config, counter, blocks_of) -> np.ndarray:
    comps = np.zeros((config.n_users,) + r.shape, dtype=complex)
    for u, view in enumerate(views):
        rows = blocks_of(view)
        grid = known_grid(config, u)[rows]
        comps[u][rows] = reconstruct_component(ests[u], grid, rows)
        counter.add("channel", 1)
        counter.add("init", len(rows))
    return comps


def _trace_row(k, z, u, est, e, rr, view, truth):
    row = {
        "k": k, "z": z, "user": u,
        "q": q_function(rr, e.m_y, est.cfo, est.phases[view.blocks]),
        "cfo": est.cfo, "sigma2": e.sigma2,
    }
    if truth is not None:
        h_true = truth[u].h
        align = np.exp(1j * np.angle(np.vdot(est.h, h_true)))
        row["cfo_err"] = est.cfo - truth[u].cfo
        row["channel_err"] = float(np.sum(np.abs(align * est.h - h_true) ** 2) / np.sum(np.abs(h_true) ** 2))
    return row


def _run_sage(r, config, rcfg, soft, truth, diagnostics) -> ReceiverResult:
    counter = TransformCounter()
    views = [UserView(config, u) for u in range(config.n_users)]
    ests = [one_shot_estimate(r, config, u, counter) for u in range(config.n_users)]
    comps = _initial_components(r, ests, views, config, counter, lambda v: v.blocks)
    last: list[EStepResult | None] = [None] * config.n_users
    trace: list[dict] = []
    decoded: list[int] = []
    read_with = [0] * config.n_users
    for k in range(1, rcfg.sage_iterations + 1):
        for u, view in enumerate(views):
            rr = sage_e_step(r, comps, u)[view.blocks]
            est = ests[u]
            ready = [v for v in decoded if v != u]
            est, e, q, rows = _ecm_cycle(rr, est, view, config, rcfg, counter, soft, k, truth, diagnostics)
            if rcfg.reread_pilots and len(ready) > read_with[u]:
                # decoded users no longer mask u's pilots with their ICI; run
                # the cycle again from re-read phases and keep the better one
                read_with[u] = len(ready)
                side = TransformCounter()
                fresh = reread_pilot_phases(r - comps[ready].sum(axis=0), ests[u], config, u, side)
                alt = _ecm_cycle(rr, fresh, view, config, rcfg, side, soft, k, truth, diagnostics)
                counter.add("reread", side.total)
                if alt[2] > q:
                    est, e, q, rows = alt
            trace.extend(rows)
            comps[u][view.blocks] = reconstruct_component(est, e.grid, view.blocks)
            counter.add("channel", 1)
            counter.add("component", len(view.blocks))
            ests[u] = est
            last[u] = e
            if u not in decoded:
                decoded.append(u)
    bits = np.stack([e.info_bits for e in last])
    llrs = np.stack([e.info_llrs for e in last]) if soft else None
    return ReceiverResult(bits, llrs, ests, counter, trace)


def run_sage_ecm(r: np.ndarray, config: FrameConfig, rcfg: ReceiverConfig,
                 truth: list[UserImpairments] | None = None, diagnostics: bool = False) -> ReceiverResult:
    """SAGE over users with ECM refinement fed by sum-product decoding.

    ``truth`` is only used to annotate the diagnostics trace.
    """
    return _run_sage(np.asarray(r), config, rcfg, True, truth, diagnostics)


def run_sage_minsum(r: np.ndarray, config: FrameConfig, rcfg: ReceiverConfig,
                    truth: list[UserImpairments] | None = None, diagnostics: bool = False) -> ReceiverResult:
    """SAGE over users with hard min-sum decisions in place of posterior means."""
    return _run_sage(np.asarray(r), config, rcfg, False, truth, diagnostics)


def true_estimates(truth: list[UserImpairments]) -> list[ParamEstimate]:
    return [ParamEstimate(imp.cfo, np.asarray(imp.phases, float).copy(), imp.h) for imp in truth]


def run_ic_receiver(r: np.ndarray, config: FrameConfig, rcfg: ReceiverConfig,
                    truth: list[UserImpairments] | None = None, csi: str = "one_shot",
                    diagnostics: bool = False) -> ReceiverResult:
    """Hard-decision interference cancellation with fixed parameters.

    ``csi="perfect"`` takes the parameters from ``truth``; ``"one_shot"``
    estimates them from the preambles and pilots. Runs ``sage_iterations``
    rounds over the users.
    """
    r = np.asarray(r)
    counter = TransformCounter()
    if csi == "perfect":
        if truth is None:
            raise ValueError("perfect CSI needs the ground-truth impairments")
        ests = true_estimates(truth)
    elif csi == "one_shot":
        ests = [one_shot_estimate(r, config, u, counter) for u in range(config.n_users)]
    else:
        raise ValueError(f"csi must be 'perfect' or 'one_shot', got {csi!r}")
    views = [UserView(config, u) for u in range(config.n_users)]
    data = config.data_blocks
    comps = _initial_components(r, ests, views, config, counter, lambda v: data)
    Hs = [est.H for est in ests]
    counter.add("channel", config.n_users)
    info = np.zeros((config.n_users, config.info_bits))
    trace: list[dict] = []
    for k in range(1, rcfg.sage_iterations + 1):
        for u, view in enumerate(views):
            est, H = ests[u], Hs[u]
            rr = sage_e_step(r, comps, u)[data]
            spectra = dft(rr * cfo_phasor(-est.cfo, config.n_fft))
            counter.add("decode", len(data))
            sigma2 = estimate_sigma_in(spectra, H, config.data_bins)
            llrs = evidence_llrs(spectra, H, est.phases[data], sigma2)
            info[u], app = fec.sum_product_decode(read_data(llrs, config), view.code)
            hard = np.where(app < 0, -1.0, 1.0)
            grid = place_data(view.template[2:].copy(), hard, config)
            comps[u][data] = reconstruct_component(est, grid, data, H)
            counter.add("reconstruct", len(data))
            if diagnostics:
                trace.append({"k": k, "user": u, "sigma2": sigma2})
    bits = (info < 0).astype(np.int8)
    return ReceiverResult(bits, info, ests, counter, trace)


def run_receiver(r: np.ndarray, config: FrameConfig, rcfg: ReceiverConfig,
                 truth: list[UserImpairments] | None = None, diagnostics: bool = False) -> ReceiverResult:
    if rcfg.kind == "sage_ecm":
        return run_sage_ecm(r, config, rcfg, truth, diagnostics)
    if rcfg.kind == "sage_minsum":
        return run_sage_minsum(r, config, rcfg, truth, diagnostics)
    csi = "perfect" if rcfg.kind == "full_csi" else "one_shot"
    return run_ic_receiver(r, config, rcfg, truth, csi, diagnostics)


def phase_error(est: ParamEstimate, imp: UserImpairments, blocks: np.ndarray) -> np.ndarray:
    """Per-block phase error after removing the constant phase absorbed by the channel estimate."""
    align = np.angle(np.vdot(est.h, imp.h))
    return wrap_phase(est.phases[blocks] - align - np.asarray(imp.phases)[blocks])
