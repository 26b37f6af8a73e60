"""Nonlinear departure and Lipschitz ratios of the semilinear crossing vs data amplitude."""
import argparse

import numpy as np

from bangcross import config
from bangcross.harness import build_semilinear, semilinear_data
from bangcross.semilinear import cross_semilinear, data_norm, lipschitz_probe


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--N", type=int, default=8)
    ap.add_argument("--amplitudes", type=float, nargs="+", default=[0.025, 0.05, 0.1, 0.2, 0.4])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    sc = config.bundled("semilinear_crossing")
    sc.semilinear.N = args.N
    spec = build_semilinear(sc)
    lin = build_semilinear(sc)
    lin.kappa = 0.0
    g = spec.grid
    print(f"{'amplitude':>10} {'|S-L|':>12} {'|S-L|/a^3':>12} {'lipschitz':>10} {'spread':>10}")
    for a in args.amplitudes:
        data = semilinear_data(g, spec.tau_minus, a, np.random.default_rng(args.seed))
        s = cross_semilinear(spec, data).state
        l = cross_semilinear(lin, data).state
        dev = data_norm(g, s.phi - l.phi, s.chi - l.chi)
        rep = lipschitz_probe(spec, data, rng=np.random.default_rng(args.seed + 1))
        print(f"{a:10.3g} {dev:12.4e} {dev / a**3:12.4e} {max(rep.ratios):10.4f} {rep.spread:10.2e}")


if __name__ == "__main__":
    main()
