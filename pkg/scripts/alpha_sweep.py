"""Alpha matrix and Bloch growth rates over a range of delta.

    python scripts/alpha_sweep.py [--K 6] [--out alpha_sweep.csv]
"""
import argparse
import csv

import numpy as np

from dynamo import bloch


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--K", type=int, default=6, help="Bloch truncation")
    ap.add_argument("--out", default="alpha_sweep.csv")
    args = ap.parse_args()

    rows = []
    for d in (0.05, 0.1, 0.15, 0.2, 0.25, 0.3):
        M = bloch.assemble_M(d)
        err = bloch.eigenvalue_set_error(M.eigenvalues, d)
        js = np.linspace(d ** 2 / 8, d ** 2, 8)
        rates = [bloch.leading_bloch_mode(d, j, args.K).leading.real for j in js]
        best = int(np.argmax(rates))
        rows.append((d, err / d ** 3, js[best], rates[best], d ** 4 / 4))
        print(f"delta={d:.2f}  err/delta^3={err / d ** 3:.4f}  "
              f"max Re p={rates[best]:.3e} at j={js[best]:.4f}  (leading order {d ** 4 / 4:.3e})")

    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delta", "eig_err_over_delta3", "j_best", "max_rate", "predicted_max_rate"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
