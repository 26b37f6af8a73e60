"""Check-side constants as a function of the Riccati family parameter delta.

The series rule predicts C1_check = C1_hat + delta C2_hat with C2 unchanged,
so the printed C1 column should be affine in delta with slope C2_hat.
"""
import argparse

import numpy as np

from bangcross import config
from bangcross.harness import oracle_rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--deltas", type=float, nargs="+", default=[-1.0, -0.5, 0.0, 0.5, 1.0])
    ap.add_argument("--lam", type=float, default=4.0)
    args = ap.parse_args()

    print(f"{'alpha_hat':>10} {'delta':>12} {'C1_check':>14} {'C2_check':>14} {'rel err':>10}")
    pts = []
    for a in args.deltas:
        sc = config.bundled("frobenius")
        sc.frobenius.lams = [args.lam]
        sc.transmission.alpha_hat = a
        (r,) = oracle_rows(sc)
        pts.append((r["delta"], r["c1_check"].real))
        print(f"{a:10.3g} {r['delta']:12.6f} {r['c1_check'].real:14.8f} {r['c2_check'].real:14.8f} "
              f"{r['rel_error']:10.2e}")
    d, c1 = np.array(pts).T
    slope = np.polyfit(d, c1, 1)[0]
    print(f"fitted slope dC1/ddelta = {slope:.10f} (C2_hat = {config.bundled('frobenius').frobenius.C2})")


if __name__ == "__main__":
    main()
