"""Run every bundled scenario and print its summary."""
import argparse
import time
from importlib import resources

from bangcross import config
from bangcross.harness import run_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("names", nargs="*", help="subset of scenarios (default: all)")
    args = ap.parse_args()

    names = args.names or sorted(p.name[:-5] for p in resources.files("bangcross.scenarios").iterdir()
                                 if p.name.endswith(".toml"))
    for name in names:
        sc = config.bundled(name)
        t0 = time.perf_counter()
        res = run_scenario(sc, f"{args.out}/{name}", seed=args.seed, threads=args.threads)
        print(f"== {name} ({time.perf_counter() - t0:.2f} s, {len(res.written)} files)")
        for k, v in res.summary.items():
            if not k.startswith("_"):
                print(f"   {k}: {v}")


if __name__ == "__main__":
    main()
