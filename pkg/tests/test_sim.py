import csv
import io

import numpy as np
import pytest
import yaml

from idma_sage.channel import draw_impairments
from idma_sage.cli import main
from idma_sage.estimation import ParamEstimate
from idma_sage.framing import FrameConfig
from idma_sage.numerics import TransformCounter
from idma_sage.receivers import ReceiverConfig, ReceiverResult, true_estimates
from idma_sage.sim import (
    CSV_COLUMNS,
    ChannelConfig,
    ExperimentConfig,
    _draw_trial,
    config_from_dict,
    config_to_dict,
    expected_core_transforms,
    load_config,
    run_experiment,
    score_frame,
    trial_impairments,
)

SMALL = FrameConfig(n_users=2, info_bits=30)


def small_config(**kw):
    base = dict(frame=SMALL, receivers=[ReceiverConfig("full_csi", 2), ReceiverConfig("one_shot", 2)],
                snr_db=[10.0, 40.0], frames=3, seed=5)
    base.update(kw)
    return ExperimentConfig(**base)


def perfect_result(bits, truth):
    return ReceiverResult(np.array(bits), None, true_estimates(truth), TransformCounter())


@pytest.fixture
def truth(rng):
    return draw_impairments(SMALL, 0.2, rng)


def test_score_perfect(rng, truth):
    bits = rng.integers(0, 2, (2, 30))
    s = score_frame(bits, truth, perfect_result(bits, truth), SMALL)
    assert s["bit_errors"] == 0 and s["frame_error"] == 0
    assert s["mse_cfo"] == 0 and s["mse_channel"] < 1e-30 and s["mse_phase"] < 1e-25


def test_score_all_flipped(rng, truth):
    bits = rng.integers(0, 2, (2, 30))
    s = score_frame(bits, truth, perfect_result(1 - bits, truth), SMALL)
    assert s["bit_errors"] / s["bits"] == 1.0 and s["frame_error"] == 1


def test_score_cfo_error(rng, truth):
    bits = rng.integers(0, 2, (2, 30))
    res = perfect_result(bits, truth)
    res.estimates = [ParamEstimate(e.cfo + 0.01, e.phases, e.h) for e in res.estimates]
    assert score_frame(bits, truth, res, SMALL)["mse_cfo"] == pytest.approx(1e-4)


def test_score_channel_and_phase_ignore_common_rotation(rng, truth):
    bits = rng.integers(0, 2, (2, 30))
    res = perfect_result(bits, truth)
    res.estimates = [ParamEstimate(e.cfo, e.phases - 0.4, e.h * np.exp(0.4j)) for e in res.estimates]
    s = score_frame(bits, truth, res, SMALL)
    assert s["mse_channel"] < 1e-25 and s["mse_phase"] < 1e-25


def test_score_phase_is_wrapped(rng, truth):
    bits = rng.integers(0, 2, (2, 30))
    res = perfect_result(bits, truth)
    res.estimates = [ParamEstimate(e.cfo, e.phases + 2 * np.pi + 0.1, e.h) for e in res.estimates]
    assert score_frame(bits, truth, res, SMALL)["mse_phase"] == pytest.approx(0.01)


def test_score_shape_mismatch(rng, truth):
    bits = rng.integers(0, 2, (2, 30))
    with pytest.raises(ValueError):
        score_frame(bits, truth, perfect_result(bits[:1], truth), SMALL)


def test_expected_transforms():
    cfg = FrameConfig(n_users=2, info_bits=30)
    assert expected_core_transforms(cfg, ReceiverConfig("sage_ecm", 1, 1)) == 20
    assert expected_core_transforms(cfg, ReceiverConfig("sage_minsum", 1, 1)) == 20
    assert expected_core_transforms(cfg, ReceiverConfig("one_shot", 3)) == 52
    desk = FrameConfig()
    assert expected_core_transforms(desk, ReceiverConfig("sage_ecm")) == 4 + 2 * 10 * 20 * 2 * 30


def test_common_random_numbers():
    cfg = small_config()
    a = _draw_trial(cfg, 7)
    b = _draw_trial(cfg, 7)
    c = _draw_trial(cfg, 8)
    assert all(np.array_equal(x, y) for x, y in zip(a[:3] + a[4:], b[:3] + b[4:]))
    assert not np.array_equal(a[0], c[0])


def test_impairments_shared_across_rho():
    cfg = small_config()
    _, _, signs, state, _ = _draw_trial(cfg, 3)
    lo, hi = trial_impairments(cfg, 0.1, signs, state), trial_impairments(cfg, 0.3, signs, state)
    for a, b, s in zip(lo, hi, signs):
        assert a.cfo == pytest.approx(0.1 * s) and b.cfo == pytest.approx(0.3 * s)
        assert np.array_equal(a.taps, b.taps) and a.delay == b.delay


def test_fixed_cfos_override_rho():
    cfg = small_config(channel=ChannelConfig(cfos=(0.06, 0.11)))
    _, _, signs, state, _ = _draw_trial(cfg, 0)
    assert [t.cfo for t in trial_impairments(cfg, 0.3, signs, state)] == [0.06, 0.11]


def test_run_experiment_basic():
    res = run_experiment(small_config())
    rows = res.rows()
    assert [(r["receiver"], r["snr_db"]) for r in rows] == [
        ("full_csi", 10.0), ("full_csi", 40.0), ("one_shot", 10.0), ("one_shot", 40.0)]
    for r in rows:
        assert 0 <= r["ber"] <= 1 and r["frames"] == 3 and r["bits"] == 3 * 60
        assert r["fer"] >= (r["ber"] > 0) / 3
    assert rows[1]["ber"] == 0 and rows[1]["fer"] == 0
    assert rows[0]["fft_count"] == expected_core_transforms(SMALL, ReceiverConfig("full_csi", 2))


def test_csv_format():
    text = run_experiment(small_config()).to_csv()
    parsed = list(csv.reader(io.StringIO(text)))
    assert parsed[0] == CSV_COLUMNS
    assert len(parsed) == 5 and "wall_time" not in parsed[0]
    timed = run_experiment(small_config(timing=True, frames=1)).to_csv()
    assert timed.splitlines()[0].endswith(",wall_time")


def test_determinism_serial():
    assert run_experiment(small_config()).to_csv() == run_experiment(small_config()).to_csv()


def test_parallel_matches_serial():
    cfg = small_config(frames=2, snr_db=[10.0])
    assert run_experiment(cfg).to_csv() == run_experiment(small_config(frames=2, snr_db=[10.0], workers=2)).to_csv()


def test_output_files(tmp_path):
    out = tmp_path / "m.csv"
    cfg = small_config(frames=1, out=str(out), diagnostics=True,
                       receivers=[ReceiverConfig("sage_ecm", 1, 2)], snr_db=[10.0])
    res = run_experiment(cfg)
    assert out.read_text() == res.to_csv()
    trace = list(csv.DictReader(open(out.with_suffix(".trace.csv"))))
    assert len(trace) == 1 * 2 * 2 and {"trial", "k", "z", "user", "q"} <= set(trace[0])


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(frames=0)
    with pytest.raises(ValueError):
        ExperimentConfig(snr_db=[])
    with pytest.raises(ValueError):
        ExperimentConfig(rho=[0.5])
    ExperimentConfig(rho=[0.5], channel=ChannelConfig(cfos=(0.06, 0.11)))


def test_config_from_dict():
    cfg = config_from_dict({
        "frame": {"n_users": 3, "info_bits": 48},
        "channel": {"n_taps": 2, "power_offsets_db": [0, -1, 0]},
        "receiver_defaults": {"sage_iterations": 4},
        "receivers": ["one_shot", {"kind": "sage_ecm", "ecm_iterations": 5}],
        "snr_db": [1, 2], "rho": [0.1], "frames": 7, "seed": 3,
    })
    assert cfg.frame == FrameConfig(n_users=3, info_bits=48)
    assert cfg.channel.power_offsets_db == (0.0, -1.0, 0.0)
    assert cfg.receivers == [ReceiverConfig("one_shot", 4), ReceiverConfig("sage_ecm", 4, 5)]
    assert cfg.snr_db == [1.0, 2.0] and cfg.frames == 7
    with pytest.raises(ValueError):
        config_from_dict({"frame": {"bogus": 1}})
    with pytest.raises(ValueError):
        config_from_dict({"unknown": 1})


def test_paper_scale_override():
    cfg = config_from_dict({"frames": 5}, paper_scale=True)
    assert cfg.frame.info_bits == 2400 and cfg.frames == 3000


def test_config_round_trip(tmp_path):
    cfg = small_config()
    data = config_to_dict(cfg)
    data.pop("out")
    data["receivers"] = [dict(r) for r in data["receivers"]]
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(data))
    assert load_config(path) == cfg


def test_shipped_configs_load():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / "configs"
    paths = sorted(root.glob("*.yaml"))
    assert paths
    for p in paths:
        load_config(p)


def test_cli_run(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"frame": {"n_users": 2, "info_bits": 30}, "receivers": ["full_csi"],
                                   "snr_db": [20], "frames": 2}))
    out = tmp_path / "o.csv"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--seed", "4"]) == 0
    assert out.read_text().startswith("receiver,U,")
    assert main(["run", "--config", str(cfg)]) == 0
    assert capsys.readouterr().out.startswith("receiver,U,")


def test_cli_errors(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("frames: 0\n")
    assert main(["run", "--config", str(bad)]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_selftest(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") >= 6
