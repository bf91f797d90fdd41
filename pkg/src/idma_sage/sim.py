"""Monte-Carlo harness: draw frames, run receivers, score, aggregate.

Seeding: trial ``t`` draws its payloads, impairments and a unit-variance
noise realization from ``SeedSequence([seed, t])``. The same draws are reused
for every SNR and rho point (common random numbers), and the noise is only
rescaled per SNR. Results therefore do not depend on the worker count.
"""

from __future__ import annotations

import csv
import io
import multiprocessing
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .channel import draw_impairments, noise_variance, synthesize_received
from .framing import FrameConfig, build_frame
from .numerics import complex_normal
from .receivers import ReceiverConfig, ReceiverResult, phase_error, run_receiver

PAPER_SCALE = {"info_bits": 2400, "frames": 3000}


@dataclass(frozen=True)
class ChannelConfig:
    n_taps: int = 4
    max_delay: int = 9
    phase_noise_std: float = 0.0
    power_offsets_db: tuple | None = None
    cfos: tuple | None = None


@dataclass
class ExperimentConfig:
    frame: FrameConfig = field(default_factory=FrameConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    receivers: list[ReceiverConfig] = field(
        default_factory=lambda: [ReceiverConfig(k) for k in ("full_csi", "one_shot", "sage_minsum", "sage_ecm")]
    )
    snr_db: list[float] = field(default_factory=lambda: [4.0, 8.0, 12.0, 16.0, 20.0])
    rho: list[float] = field(default_factory=lambda: [0.2])
    frames: int = 200
    seed: int = 1
    workers: int = 1
    out: str | None = None
    diagnostics: bool = False
    timing: bool = False

    def __post_init__(self):
        if self.frames < 1:
            raise ValueError("frames must be at least 1")
        if not self.snr_db or not self.rho or not self.receivers:
            raise ValueError("snr_db, rho and receivers must be nonempty")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.channel.cfos is None and any(not 0 <= r <= 0.35 for r in self.rho):
            raise ValueError("rho must lie in [0, 0.35] (preamble CFO acquisition range)")


@dataclass
class FrameRecord:
    receiver: str
    snr_db: float
    rho: float
    trial: int
    bit_errors: int
    bits: int
    frame_error: int
    mse_cfo: float
    mse_channel: float
    mse_phase: float
    fft_count: int
    wall_time: float = 0.0


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[FrameRecord]
    traces: list[dict] = field(default_factory=list)

    def rows(self) -> list[dict]:
        return aggregate(self.records, self.config)

    def select(self, receiver: str, rho: float | None = None, snr_db: float | None = None) -> list[FrameRecord]:
        return [
            r for r in self.records
            if r.receiver == receiver and (rho is None or r.rho == rho) and (snr_db is None or r.snr_db == snr_db)
        ]

    def to_csv(self) -> str:
        return metrics_csv(self.rows(), self.config.timing)


# ---------------------------------------------------------------------------
# scoring


def score_frame(bits: np.ndarray, truth, result: ReceiverResult, config: FrameConfig) -> dict:
    """BER/FER and parameter MSEs for one frame.

    The channel estimate is compared after removing the common phase it
    absorbs from the preamble; phase errors are measured on the data blocks
    relative to that same phase.
    """
    bits = np.asarray(bits)
    if result.bits.shape != bits.shape or len(truth) != bits.shape[0] or len(result.estimates) != bits.shape[0]:
        raise ValueError("decoded bits, estimates and ground truth disagree in shape")
    errors = int(np.count_nonzero(result.bits != bits))
    mse_cfo, mse_ch, mse_ph = [], [], []
    for est, imp in zip(result.estimates, truth):
        h = imp.h
        align = np.exp(1j * np.angle(np.vdot(est.h, h)))
        mse_cfo.append((est.cfo - imp.cfo) ** 2)
        mse_ch.append(float(np.sum(np.abs(align * est.h - h) ** 2) / np.sum(np.abs(h) ** 2)))
        mse_ph.append(float(np.mean(phase_error(est, imp, config.data_blocks) ** 2)))
    return {
        "bit_errors": errors,
        "bits": int(bits.size),
        "frame_error": int(errors > 0),
        "mse_cfo": float(np.mean(mse_cfo)),
        "mse_channel": float(np.mean(mse_ch)),
        "mse_phase": float(np.mean(mse_ph)),
    }


def expected_core_transforms(config: FrameConfig, rcfg: ReceiverConfig) -> int:
    """Core transform count: ``2U + 2KZUM'`` (SAGE) or ``2U + 2KUM'`` (IC)."""
    u, m = config.n_users, config.n_data_blocks
    k = rcfg.sage_iterations
    if rcfg.kind in ("sage_ecm", "sage_minsum"):
        return 2 * u + 2 * k * rcfg.ecm_iterations * u * m
    preamble = 0 if rcfg.kind == "full_csi" else 2 * u
    return preamble + 2 * k * u * m


def fft_counter_check(result: ReceiverResult, config: FrameConfig, rcfg: ReceiverConfig) -> tuple[int, int]:
    """``(expected, observed)`` core transform counts for one receiver run."""
    return expected_core_transforms(config, rcfg), result.counter.core


# ---------------------------------------------------------------------------
# running


def _draw_trial(cfg: ExperimentConfig, trial: int):
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), int(trial)]))
    fc = cfg.frame
    bits = rng.integers(0, 2, (fc.n_users, fc.info_bits), dtype=np.int8)
    frames = np.stack([build_frame(bits[u], fc, u) for u in range(fc.n_users)])
    # one uniform per user fixes the CFO sign for every rho
    signs = np.where(rng.random(fc.n_users) < 0.5, -1.0, 1.0)
    imp_rng = np.random.default_rng(rng.integers(2**63))
    noise = complex_normal(rng, (fc.n_blocks, fc.n_fft))
    return bits, frames, signs, imp_rng.bit_generator.state, noise


def trial_impairments(cfg: ExperimentConfig, rho: float, signs: np.ndarray, imp_state: dict):
    """Impairments for one trial at one rho; everything but the CFO magnitude is shared across rho."""
    fc, ch = cfg.frame, cfg.channel
    imp_rng = np.random.default_rng()
    imp_rng.bit_generator.state = imp_state
    cfos = ch.cfos if ch.cfos is not None else tuple(float(s * rho) for s in signs)
    return draw_impairments(fc, rho, imp_rng, ch.n_taps, ch.max_delay, ch.phase_noise_std,
                            ch.power_offsets_db, cfos)


def run_trial(cfg: ExperimentConfig, trial: int) -> tuple[list[FrameRecord], list[dict]]:
    """Every (rho, SNR, receiver) combination for one trial."""
    fc = cfg.frame
    bits, frames, signs, imp_state, noise = _draw_trial(cfg, trial)
    records, traces = [], []
    for rho in cfg.rho:
        truth = trial_impairments(cfg, rho, signs, imp_state)
        clean = synthesize_received(frames, truth, fc)
        for snr in cfg.snr_db:
            r = clean + np.sqrt(noise_variance(snr, fc)) * noise
            for rcfg in cfg.receivers:
                start = time.perf_counter()
                res = run_receiver(r, fc, rcfg, truth=truth, diagnostics=cfg.diagnostics)
                elapsed = time.perf_counter() - start
                score = score_frame(bits, truth, res, fc)
                records.append(FrameRecord(rcfg.kind, float(snr), float(rho), trial, fft_count=res.counter.core,
                                           wall_time=elapsed, **score))
                for row in res.trace:
                    traces.append({"trial": trial, "rho": rho, "snr_db": snr, "receiver": rcfg.kind, **row})
    return records, traces


def _worker(args):
    cfg, trial = args
    return run_trial(cfg, trial)


def run_experiment(cfg: ExperimentConfig, progress=None) -> ExperimentResult:
    """Run every trial, serially or on a process pool; output order is fixed."""
    jobs = [(cfg, t) for t in range(cfg.frames)]
    if cfg.workers == 1:
        outputs = []
        for job in jobs:
            outputs.append(_worker(job))
            if progress:
                progress(len(outputs), len(jobs))
    else:
        with multiprocessing.get_context("spawn").Pool(cfg.workers) as pool:
            outputs = []
            for out in pool.imap(_worker, jobs):
                outputs.append(out)
                if progress:
                    progress(len(outputs), len(jobs))
    order = {r.kind: i for i, r in enumerate(cfg.receivers)}
    records = [rec for recs, _ in outputs for rec in recs]
    records.sort(key=lambda r: (order[r.receiver], r.rho, r.snr_db, r.trial))
    traces = [row for _, tr in outputs for row in tr]
    result = ExperimentResult(cfg, records, traces)
    if cfg.out:
        Path(cfg.out).write_text(result.to_csv(), encoding="utf-8")
        if cfg.diagnostics and traces:
            Path(cfg.out).with_suffix(".trace.csv").write_text(_dicts_csv(traces), encoding="utf-8")
    return result


# ---------------------------------------------------------------------------
# aggregation and output

CSV_COLUMNS = ["receiver", "U", "snr_db", "rho", "frames", "bit_errors", "bits", "ber", "frame_errors", "fer",
               "mse_cfo", "mse_channel", "mse_phase", "fft_count"]


def aggregate(records: list[FrameRecord], cfg: ExperimentConfig) -> list[dict]:
    groups: dict[tuple, list[FrameRecord]] = {}
    for rec in records:
        groups.setdefault((rec.receiver, rec.rho, rec.snr_db), []).append(rec)
    order = {r.kind: i for i, r in enumerate(cfg.receivers)}
    rows = []
    for key in sorted(groups, key=lambda k: (order[k[0]], k[1], k[2])):
        recs = sorted(groups[key], key=lambda r: r.trial)
        bit_errors = sum(r.bit_errors for r in recs)
        bits = sum(r.bits for r in recs)
        frame_errors = sum(r.frame_error for r in recs)
        rows.append({
            "receiver": key[0],
            "U": cfg.frame.n_users,
            "snr_db": key[2],
            "rho": key[1],
            "frames": len(recs),
            "bit_errors": bit_errors,
            "bits": bits,
            "ber": bit_errors / bits,
            "frame_errors": frame_errors,
            "fer": frame_errors / len(recs),
            "mse_cfo": float(np.mean([r.mse_cfo for r in recs])),
            "mse_channel": float(np.mean([r.mse_channel for r in recs])),
            "mse_phase": float(np.mean([r.mse_phase for r in recs])),
            "fft_count": float(np.mean([r.fft_count for r in recs])),
            "wall_time": float(np.sum([r.wall_time for r in recs])),
        })
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def metrics_csv(rows: list[dict], timing: bool = False) -> str:
    cols = CSV_COLUMNS + (["wall_time"] if timing else [])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in cols])
    return buf.getvalue()


def _dicts_csv(rows: list[dict]) -> str:
    cols: list[str] = []
    for row in rows:
        cols.extend(c for c in row if c not in cols)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for row in rows:
        writer.writerow([_fmt(row.get(c, "")) for c in cols])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# configuration files


def _build(cls, data: dict | None, **overrides):
    data = dict(data or {})
    data.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**data)


def config_from_dict(data: dict, paper_scale: bool = False) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from parsed YAML (schema in README)."""
    data = dict(data)
    frame = dict(data.pop("frame", None) or {})
    channel = dict(data.pop("channel", None) or {})
    for key in ("power_offsets_db", "cfos"):
        if channel.get(key) is not None:
            channel[key] = tuple(float(x) for x in channel[key])
    defaults = data.pop("receiver_defaults", None) or {}
    kinds = data.pop("receivers", None)
    if kinds is None:
        kinds = ["full_csi", "one_shot", "sage_minsum", "sage_ecm"]
    receivers = []
    for item in kinds:
        spec = {"kind": item} if isinstance(item, str) else dict(item)
        receivers.append(_build(ReceiverConfig, {**defaults, **spec}))
    if paper_scale:
        frame["info_bits"] = PAPER_SCALE["info_bits"]
        data["frames"] = PAPER_SCALE["frames"]
    for key in ("snr_db", "rho"):
        if key in data:
            data[key] = [float(x) for x in data[key]]
    return _build(ExperimentConfig, data, frame=_build(FrameConfig, frame),
                  channel=_build(ChannelConfig, channel), receivers=receivers)


def load_config(path, paper_scale: bool = False) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: top level must be a mapping")
    return config_from_dict(data, paper_scale)


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = asdict(cfg)
    out["receivers"] = [asdict(r) for r in cfg.receivers]
    return out
