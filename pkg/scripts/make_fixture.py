"""Write the synthetic networks and the winter-week profiles to a directory."""
import argparse
from pathlib import Path

from mesflow.fixture import SCALES, generate_fixture, synthetic_week_profiles
from mesflow.io import save_network


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="data")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for scale in SCALES:
        save_network(generate_fixture(args.seed, scale), out / f"{scale}.json")
    synthetic_week_profiles(args.seed).to_csv(out / "winter_week.csv")
    print(f"wrote {', '.join(sorted(p.name for p in out.iterdir()))} to {out}")


if __name__ == "__main__":
    main()
