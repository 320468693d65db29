"""Regenerate the synthetic instance files under instances/."""

import argparse
from pathlib import Path

from evrp2e.synthetic import fixture_names, fixture_text


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "instances"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in fixture_names():
        (out / f"{name}.txt").write_text(fixture_text(name))
        print(name)


if __name__ == "__main__":
    main()
