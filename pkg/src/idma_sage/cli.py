"""Command-line entry point: ``idma-sage run`` and ``idma-sage selftest``."""

from __future__ import annotations

import argparse
import logging
import sys

from .oracles import run_selftest
from .sim import load_config, run_experiment, with_overrides

log = logging.getLogger("idma_sage")


def _cmd_run(args) -> int:
    cfg = load_config(args.config, paper_scale=args.paper_scale)
    cfg = with_overrides(cfg, seed=args.seed, workers=args.workers, out=args.out,
                         diagnostics=True if args.diagnostics else None,
                         timing=True if args.timing else None)
    log.info("%d frames x %d SNR x %d rho x %d receivers, %d worker(s)", cfg.frames, len(cfg.snr_db),
             len(cfg.rho), len(cfg.receivers), cfg.workers)

    def progress(done, total):
        if done == total or done % max(1, total // 20) == 0:
            log.info("trial %d/%d", done, total)

    result = run_experiment(cfg, progress=progress)
    if cfg.out is None:
        sys.stdout.write(result.to_csv())
    else:
        log.info("wrote %s", cfg.out)
    return 0


def _cmd_selftest(args) -> int:
    checks = run_selftest(args.seed or 0)
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}  ({c['detail']})")
    return 0 if all(c["passed"] for c in checks) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="idma-sage", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte-Carlo experiment from a YAML config")
    run.add_argument("--config", required=True)
    run.add_argument("--paper-scale", action="store_true", help="J=2400 payload bits and 3000 frames per point")
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--out", help="CSV path (default: stdout)")
    run.add_argument("--diagnostics", action="store_true", help="also write per-iteration traces next to --out")
    run.add_argument("--timing", action="store_true", help="add a wall_time column (breaks byte-identity)")
    run.set_defaults(func=_cmd_run)

    st = sub.add_parser("selftest", help="run the oracle checks")
    st.add_argument("--seed", type=int, default=0)
    st.set_defaults(func=_cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
