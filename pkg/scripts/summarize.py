"""Pivot a metrics CSV into a receiver x SNR (or rho) table.

    python3 scripts/summarize.py results/desk.csv --metric mse_channel
"""

import argparse
import csv
import math


def read_rows(path):
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k, v in r.items():
            if k != "receiver":
                r[k] = float(v)
    return rows


def print_table(rows, metric, column="snr_db"):
    kinds = list(dict.fromkeys(r["receiver"] for r in rows))
    cols = sorted({r[column] for r in rows})
    print(f"{metric:12s}" + "".join(f"{c:>11g}" for c in cols))
    for kind in kinds:
        vals = {r[column]: r[metric] for r in rows if r["receiver"] == kind}
        print(f"{kind:12s}" + "".join(f"{vals.get(c, float('nan')):11.2e}" for c in cols))


def snr_at_ber(rows, kind, target):
    """Log-linear interpolation of the BER curve; zero-BER points are floored at half an error."""
    pts = sorted((r["snr_db"], r["ber"], r["bits"]) for r in rows if r["receiver"] == kind)
    if not pts:
        return math.nan, "no data"
    if pts[0][1] <= target:
        return pts[0][0], "(at or below grid start)"
    for (s0, b0, _), (s1, b1, n1) in zip(pts, pts[1:]):
        if b1 <= target:
            y0, y1 = math.log10(b0), math.log10(max(b1, 0.5 / n1))
            return s0 + (math.log10(target) - y0) / (y1 - y0) * (s1 - s0), ""
    return pts[-1][0], "(not reached)"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("csv")
    ap.add_argument("--metric", default="ber")
    ap.add_argument("--column", default="snr_db", choices=["snr_db", "rho"])
    ap.add_argument("--target-ber", type=float)
    args = ap.parse_args()
    rows = read_rows(args.csv)
    print_table(rows, args.metric, args.column)
    if args.target_ber:
        for kind in dict.fromkeys(r["receiver"] for r in rows):
            snr, note = snr_at_ber(rows, kind, args.target_ber)
            print(f"{kind:12s} SNR at BER {args.target_ber:g}: {snr:.2f} dB {note}")


if __name__ == "__main__":
    main()
