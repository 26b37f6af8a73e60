"""Refinement study of the damped-layer limit map: mesh ratio and Gauss nodes per cell."""
import argparse

import numpy as np

from bangcross import riccati as ric
from bangcross.mode_evolver import DampedOptions, ModeProblem, ModeState, limit_W
from bangcross.profiles import EffectiveMassSq, Integrability


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--c2", type=float, default=1.0)
    ap.add_argument("--side", choices=["hat", "check"], default="check")
    ap.add_argument("--lams", type=float, nargs="+", default=[1.0, 4.0, 16.0])
    ap.add_argument("--ratios", type=float, nargs="+", default=[0.1, 0.2, 0.4, 0.6, 0.8])
    ap.add_argument("--nodes", type=int, nargs="+", default=[4, 6, 8, 12])
    args = ap.parse_args()

    s = -1 if args.side == "hat" else 1
    q = EffectiveMassSq(lambda t: args.c2 / np.abs(t), args.side, Integrability.WEIGHTED_L1, extent=1.0)
    A = ric.picard_construct(q)
    lams = np.asarray(args.lams)
    P = ModeProblem(lams, 0.0, q)
    state = ModeState(s * 0.8 * A.h, np.ones_like(lams), np.zeros_like(lams))
    ref = limit_W(P, A, state)

    def err(opt):
        b = limit_W(P, A, state, opt)
        return max(np.abs(b.psi0 - ref.psi0).max(), np.abs(b.psi1 - ref.psi1).max())

    print("nodes=4, varying mesh ratio")
    for r in args.ratios:
        print(f"  ratio {r:4.2f}  error {err(DampedOptions(nodes=4, ratio=r)):.3e}")
    print("ratio=0.5, varying nodes per cell")
    for n in args.nodes:
        print(f"  nodes {n:3d}  error {err(DampedOptions(nodes=n)):.3e}")


if __name__ == "__main__":
    main()
