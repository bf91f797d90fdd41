import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from idma_sage.framing import (
    LTS,
    FrameConfig,
    build_frame,
    known_grid,
    ofdm_modulate,
    place_data,
    read_data,
    strip_cp,
    training_block,
)
from idma_sage.numerics import dft


def test_lts_table():
    assert LTS.shape == (53,) and LTS[26] == 0
    assert set(np.unique(np.delete(LTS, 26))) == {-1.0, 1.0}


def test_training_block():
    cfg = FrameConfig()
    t = training_block(cfg)
    assert t.shape == (64,) and t[0] == 0
    used = np.flatnonzero(t)
    assert len(used) == 52 and set(np.unique(t[used])) == {-1.0, 1.0}


@pytest.mark.parametrize("users", [1, 2, 3, 4])
def test_subcarrier_sets_disjoint(users):
    cfg = FrameConfig(n_users=users)
    data = set(cfg.data_bins.tolist())
    assert len(data) == 48 and 0 not in data
    pilots = [set(cfg.pilot_bins(u).tolist()) for u in range(users)]
    for u, p in enumerate(pilots):
        assert len(p) == 2 and not p & data
        for v in range(u):
            assert not p & pilots[v]


def test_geometry_desk_default():
    cfg = FrameConfig()
    assert cfg.symbol_length == 80
    assert cfg.coded_length == 1440 and cfg.n_data_blocks == 30 and cfg.n_blocks == 34
    assert cfg.n_padding == 0


def test_invalid_config():
    with pytest.raises(ValueError):
        FrameConfig(n_users=0)
    with pytest.raises(ValueError):
        FrameConfig(n_users=8)
    with pytest.raises(ValueError):
        FrameConfig(info_bits=0)
    with pytest.raises(ValueError):
        FrameConfig().pilot_bins(2)


def test_preamble_layout_two_users(rng):
    cfg = FrameConfig(n_users=2, info_bits=16)
    x0 = build_frame(rng.integers(0, 2, 16), cfg, 0)
    x1 = build_frame(rng.integers(0, 2, 16), cfg, 1)
    t = training_block(cfg)
    assert np.array_equal(x0[0], t) and np.array_equal(x0[1], t)
    assert not x0[2:4].any()
    assert not x1[0:2].any() and np.array_equal(x1[2], t)


def test_zero_payload_maps_to_plus_one():
    cfg = FrameConfig(n_users=2, info_bits=16)
    x = build_frame(np.zeros(16, int), cfg, 0)
    assert np.all(x[np.ix_(cfg.data_blocks, cfg.data_bins)] == 1.0)


def test_cell_partition(rng):
    cfg = FrameConfig(n_users=3, info_bits=40)
    x = build_frame(rng.integers(0, 2, 40), cfg, 1)
    rows = x[cfg.data_blocks]
    other = np.setdiff1d(np.arange(64), np.concatenate((cfg.data_bins, cfg.pilot_bins(1))))
    assert not rows[:, other].any()
    assert np.all(rows[:, cfg.pilot_bins(1)] == 1)
    assert np.all(np.abs(rows[:, cfg.data_bins]) == 1)


def test_padding_cells_are_known(rng):
    cfg = FrameConfig(n_users=1, info_bits=10)  # 30 chips in a 48-cell block
    assert cfg.n_padding == 18
    x = build_frame(rng.integers(0, 2, 10), cfg, 0)
    assert np.all(x[cfg.data_blocks[-1], cfg.data_bins[30:]] == 1.0)


@given(st.integers(0, 2**40 - 1), st.integers(0, 2**40 - 1))
def test_build_frame_injective(a, b):
    cfg = FrameConfig(n_users=2, info_bits=40)
    ba = np.array([(a >> i) & 1 for i in range(40)])
    bb = np.array([(b >> i) & 1 for i in range(40)])
    same = np.array_equal(build_frame(ba, cfg, 0), build_frame(bb, cfg, 0))
    assert same == (a == b)


def test_place_read_round_trip(rng):
    cfg = FrameConfig(n_users=2, info_bits=24)
    vals = rng.standard_normal(cfg.coded_length)
    grid = place_data(np.zeros((cfg.n_blocks, 64)), vals, cfg)
    assert np.array_equal(read_data(grid, cfg), vals)
    with pytest.raises(ValueError):
        place_data(grid, vals[:-1], cfg)


def test_build_frame_size_mismatch():
    with pytest.raises(ValueError):
        build_frame(np.zeros(3, int), FrameConfig(info_bits=4), 0)


def test_modulation_cp_and_round_trip(rng):
    cfg = FrameConfig(n_users=2, info_bits=16)
    x = build_frame(rng.integers(0, 2, 16), cfg, 0)
    s = ofdm_modulate(x, cfg)
    assert s.shape == (cfg.n_blocks, 80)
    assert np.allclose(s[:, :16], s[:, 64:])
    assert np.max(np.abs(dft(strip_cp(s, cfg)) - x)) < 1e-10


def test_single_subcarrier_is_constant_modulus():
    cfg = FrameConfig()
    grid = np.zeros((1, 64))
    grid[0, 5] = 1.0
    assert np.allclose(np.abs(ofdm_modulate(grid, cfg)), 1 / 8)


def test_known_grid_has_no_data():
    cfg = FrameConfig()
    g = known_grid(cfg, 0)
    assert not g[np.ix_(cfg.data_blocks, cfg.data_bins)].any()
