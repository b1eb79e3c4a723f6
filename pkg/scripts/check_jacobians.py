"""Analytic against finite-difference Jacobian blocks on both fixtures."""
import argparse

from mesflow.fixture import SCALES, generate_fixture
from mesflow.solver import jacobian_check


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--states", type=int, default=100, help="random states on the small fixture")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    ok = True
    for scale in SCALES:
        network = generate_fixture(args.seed, scale)
        n = args.states if scale == "small" else max(1, args.states // 20)
        for frozen in (False, True):
            checks = jacobian_check(network, n_states=n, seed=args.seed, frozen_friction=frozen)
            label = "frozen-lambda" if frozen else "exact"
            for c in checks:
                ok &= c.ok
                print(f"{scale:<7} {label:<13} {c.domain:<5} {c.block} {c.rel_error:9.2e} / {c.tolerance:.0e}"
                      f"{'' if c.ok else '  FAIL'}")
    raise SystemExit(0 if ok else 4)


if __name__ == "__main__":
    main()
