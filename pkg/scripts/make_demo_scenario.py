"""Write the bundled demo scenario to JSON so it can be fed to the CLI.

    python3 scripts/make_demo_scenario.py --frames 20 --out demo_scenario.json
"""
import argparse

from sensorpose.demo import demo_scenario
from sensorpose.formats import save_scenario


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--frames", type=int, default=None, help="default: the generator config's frame count")
    ap.add_argument("--out", default="demo_scenario.json")
    args = ap.parse_args()
    sc = demo_scenario(args.frames)
    save_scenario(args.out, sc)
    n_obj = sum(len(f.objects) for f in sc.frames)
    print(f"{args.out}: {len(sc.frames)} frames, {n_obj} objects, {len(sc.rails)} rails, "
          f"{len(sc.environment.boxes)} environment boxes")


if __name__ == "__main__":
    main()
