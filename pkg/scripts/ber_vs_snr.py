"""BER/FER/MSE against SNR for every receiver; writes a CSV and prints a BER table.

    python3 scripts/ber_vs_snr.py --config configs/desk.yaml --out results/desk.csv
"""

import argparse
import logging
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))
from summarize import print_table, snr_at_ber  # noqa: E402

from idma_sage.sim import load_config, run_experiment, with_overrides  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/desk.yaml")
    ap.add_argument("--out", default="results/ber_vs_snr.csv")
    ap.add_argument("--frames", type=int, help="override frames per point")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--paper-scale", action="store_true")
    ap.add_argument("--target-ber", type=float, default=1e-2)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = load_config(args.config, paper_scale=args.paper_scale)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    cfg = with_overrides(cfg, frames=args.frames, workers=args.workers, out=args.out)
    result = run_experiment(cfg, progress=lambda d, t: logging.info("trial %d/%d", d, t) if d % 10 == 0 else None)
    rows = result.rows()
    print_table(rows, "ber")
    for kind in dict.fromkeys(r["receiver"] for r in rows):
        snr, note = snr_at_ber(rows, kind, args.target_ber)
        print(f"{kind:12s} SNR at BER {args.target_ber:g}: {snr:.2f} dB {note}")


if __name__ == "__main__":
    main()
