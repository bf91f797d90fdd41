import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idma_sage.channel import UserImpairments, draw_impairments, noise_variance, synthesize_received
from idma_sage.estimation import (
    EstimationError,
    ParamEstimate,
    estimate_sigma_in,
    evidence_llrs,
    fit_taps,
    one_shot_estimate,
    pilot_phase_estimate,
    preamble_cfo_estimate,
    preamble_channel_estimate,
    residual_power,
)
from idma_sage.framing import FrameConfig, build_frame, training_bins
from idma_sage.numerics import TransformCounter, dft


def received(cfg, truth, rng, noise_var=0.0):
    bits = [rng.integers(0, 2, cfg.info_bits) for _ in range(cfg.n_users)]
    frames = np.stack([build_frame(b, cfg, u) for u, b in enumerate(bits)])
    return synthesize_received(frames, truth, cfg, noise_var, rng=rng), frames


def single_user(cfo, rng, delay=0):
    cfg = FrameConfig(n_users=1, info_bits=24)
    taps = (rng.standard_normal(4) + 1j * rng.standard_normal(4)) / np.sqrt(8)
    phases = 2 * np.pi * cfo * (cfg.n_cp + np.arange(1, cfg.n_blocks + 1) * cfg.symbol_length) / 64
    return cfg, UserImpairments(cfo, phases, taps, delay, 64)


@settings(max_examples=25)
@given(st.floats(-0.39, 0.39), st.integers(0, 2**32 - 1))
def test_noiseless_preamble_cfo_exact(cfo, seed):
    rng = np.random.default_rng(seed)
    cfg, t = single_user(cfo, rng)
    r, _ = received(cfg, [t], rng)
    assert preamble_cfo_estimate(r[0], r[1], cfg) == pytest.approx(cfo, abs=1e-9)


def test_cfo_ambiguity_boundary(rng):
    cfg, t = single_user(0.41, rng)
    r, _ = received(cfg, [t], rng)
    # beyond N / (2 N_s) = 0.4 the estimate wraps
    assert preamble_cfo_estimate(r[0], r[1], cfg) == pytest.approx(0.41 - 0.8, abs=1e-9)


def test_cfo_zero_correlation():
    cfg = FrameConfig(n_users=1)
    with pytest.raises(EstimationError):
        preamble_cfo_estimate(np.zeros(64), np.zeros(64), cfg)


def test_noiseless_channel_exact(rng):
    cfg, t = single_user(0.17, rng, delay=5)
    r, _ = received(cfg, [t], rng)
    cfo = preamble_cfo_estimate(r[0], r[1], cfg)
    counter = TransformCounter()
    h = preamble_channel_estimate(r[0], r[1], cfo, cfg, counter=counter)
    expect = t.h * np.exp(1j * t.phases[0])
    assert np.max(np.abs(h - expect)) < 1e-9
    assert counter.counts["preamble"] == 2


def test_channel_rejects_zero_training():
    cfg = FrameConfig(n_users=1)
    with pytest.raises(ValueError):
        preamble_channel_estimate(np.ones(64), np.ones(64), 0.0, cfg, training=np.zeros(64))


def test_fit_taps_singular_returns_none():
    cfg = FrameConfig(n_users=1)
    w = np.zeros(64)
    w[:3] = 1.0
    assert fit_taps(w, np.zeros(64, complex), cfg) is None


def test_fit_taps_least_squares(rng):
    cfg = FrameConfig(n_users=1)
    used = training_bins(cfg)
    w = np.zeros(64)
    w[used] = 1.0
    h = np.zeros(64, complex)
    h[:16] = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    numer = np.where(w > 0, dft(h), 0)
    assert np.max(np.abs(fit_taps(w, numer, cfg) - h)) < 1e-6


def test_channel_mse_falls_with_snr(rng):
    cfg = FrameConfig(n_users=1, info_bits=24)
    mse = []
    for snr in (0.0, 10.0, 20.0):
        errs = []
        for _ in range(200):
            t = draw_impairments(cfg, 0.2, rng)[0]
            r, _ = received(cfg, [t], rng, noise_variance(snr, cfg))
            cfo = preamble_cfo_estimate(r[0], r[1], cfg)
            h = preamble_channel_estimate(r[0], r[1], cfo, cfg)
            errs.append(np.sum(np.abs(h - t.h * np.exp(1j * t.phases[0])) ** 2))
        mse.append(np.mean(errs))
    assert mse[0] > mse[1] > mse[2]
    assert mse[2] < 0.1 * mse[0]


def test_pilot_phase(rng):
    H = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    theta = rng.uniform(-np.pi, np.pi, 5)
    spectra = np.exp(1j * theta)[:, None] * H
    assert np.allclose(pilot_phase_estimate(spectra, H, np.array([3, 40])), theta)
    with pytest.raises(ValueError):
        pilot_phase_estimate(spectra, H, np.array([], int))
    with pytest.raises(EstimationError):
        pilot_phase_estimate(spectra, np.zeros(64), np.array([3]))


def test_evidence_llrs_sign_and_scale():
    H = np.full(4, 2.0 + 0j)
    spectra = np.array([[2.0, -2.0, 2j, 0.0]])
    llr = evidence_llrs(spectra, H, np.zeros(1), 0.5)
    assert np.allclose(llr, [32.0, -32.0, 0.0, 0.0])
    rotated = evidence_llrs(spectra * 1j, H, np.array([np.pi / 2]), 0.5)
    assert np.allclose(rotated, llr)
    with pytest.raises(ValueError):
        evidence_llrs(spectra, H, np.zeros(1), 0.0)


def test_residual_power_and_floor():
    H = np.ones(64, complex)
    bins = np.arange(10)
    exact = np.ones((2, 64), complex)
    assert residual_power(exact, H, bins) == pytest.approx(0.0)
    assert estimate_sigma_in(exact, H, bins) == pytest.approx(1e-6)
    assert residual_power(0.5 * exact, H, bins) < 0


def test_sigma_in_tracks_noise(rng):
    cfg = FrameConfig(n_users=1, info_bits=240)
    t = UserImpairments(0.0, np.zeros(cfg.n_blocks), np.array([8.0 + 0j]), 0, 64)
    r, _ = received(cfg, [t], rng, 0.5)
    spectra = dft(r[cfg.data_blocks])
    assert estimate_sigma_in(spectra, dft(t.h), cfg.data_bins) == pytest.approx(0.5, rel=0.1)


def test_one_shot_noiseless_two_users(rng):
    cfg = FrameConfig(n_users=2, info_bits=48)
    truth = [UserImpairments(0.0, np.zeros(cfg.n_blocks), 8 * np.exp(1j * rng.uniform(0, 6, 1)), 0, 64)]
    truth.append(UserImpairments(0.0, np.zeros(cfg.n_blocks), np.zeros(1, complex), 0, 64))
    r, _ = received(cfg, truth, rng)
    counter = TransformCounter()
    est = one_shot_estimate(r, cfg, 0, counter)
    assert isinstance(est, ParamEstimate)
    assert est.cfo == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(est.h, truth[0].h, atol=1e-9)
    assert np.allclose(est.phases[cfg.data_blocks], 0.0, atol=1e-9)
    assert counter.counts["preamble"] == 2 and counter.counts["init"] == cfg.n_data_blocks


def test_one_shot_phase_under_cfo(rng):
    cfg = FrameConfig(n_users=1, info_bits=48)
    cfg, t = single_user(0.2, rng)
    r, _ = received(cfg, [t], rng)
    est = one_shot_estimate(r, cfg, 0)
    rel = np.angle(np.exp(1j * (est.phases - (t.phases - t.phases[0]))))
    # pilots see ICI from the data cells, so only approximate
    assert np.max(np.abs(rel[cfg.data_blocks])) < 0.3
    assert np.max(np.abs(rel[:2])) < 1e-9


def test_param_estimate_copy_is_deep():
    e = ParamEstimate(0.1, np.zeros(3), np.zeros(4, complex))
    c = e.copy()
    c.phases[0] = 1.0
    c.h[0] = 1.0
    assert e.phases[0] == 0 and e.h[0] == 0 and c == ParamEstimate(0.1, c.phases, c.h)
