"""BER against the CFO attenuation factor rho at a fixed SNR.

    python3 scripts/rho_sweep.py --config configs/rho-sweep.yaml --out results/rho_sweep.csv
"""

import argparse
import logging
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))
from summarize import print_table  # noqa: E402

from idma_sage.sim import load_config, run_experiment, with_overrides  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/rho-sweep.yaml")
    ap.add_argument("--out", default="results/rho_sweep.csv")
    ap.add_argument("--frames", type=int)
    ap.add_argument("--workers", type=int)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = load_config(args.config)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    cfg = with_overrides(cfg, frames=args.frames, workers=args.workers, out=args.out)
    rows = run_experiment(cfg).rows()
    print_table(rows, "ber", column="rho")


if __name__ == "__main__":
    main()
