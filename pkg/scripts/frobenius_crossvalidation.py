"""Pipeline vs series transmission rule over eigenvalues, couplings, series orders and windows."""
import argparse
import itertools

from bangcross import config
from bangcross.harness import oracle_rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lams", type=float, nargs="+", default=[1.0, 4.0, 9.0])
    ap.add_argument("--c2", type=float, nargs="+", default=[0.25, 1.0])
    ap.add_argument("--orders", type=int, nargs="+", default=[6, 10, 20, 40])
    ap.add_argument("--windows", type=float, nargs="+", default=[0.1, 0.2, 0.4])
    args = ap.parse_args()

    print(f"{'c2_hat':>7} {'c2_check':>8} {'N':>4} {'h':>5} {'max rel err':>12} {'delta':>12}")
    for c2h, c2c, N, h in itertools.product(args.c2, args.c2, args.orders, args.windows):
        sc = config.bundled("frobenius")
        f = sc.frobenius
        f.lams, f.c2_hat, f.c2_check, f.N, f.h = list(args.lams), c2h, c2c, N, h
        rows = oracle_rows(sc)
        err = max(r["rel_error"] for r in rows)
        print(f"{c2h:7.3g} {c2c:8.3g} {N:4d} {h:5.2f} {err:12.3e} {rows[0]['delta']:12.6f}")


if __name__ == "__main__":
    main()
