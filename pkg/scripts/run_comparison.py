"""Ground-coverage baseline vs object-centric placement on the demo scenario."""
import argparse

from sensorpose.camera import Intrinsics
from sensorpose.demo import demo_scenario
from sensorpose.evaluation import compare_baseline
from sensorpose.gdopt import HyperParams


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sensors", type=int, default=2)
    ap.add_argument("--positions", type=int, default=3)
    ap.add_argument("--yaws", type=int, default=4)
    ap.add_argument("--pitch", type=float, default=54.0)
    ap.add_argument("--gd-runs", type=int, default=0, help="also run gradient ascent with this many restarts")
    args = ap.parse_args()
    grid = {"positions": args.positions, "yaws": args.yaws, "pitches": [args.pitch]}
    rows = compare_baseline(demo_scenario(), args.sensors, Intrinsics(), grid, HyperParams(), args.gd_runs,
                            include_gd=args.gd_runs > 0)
    print("method,N,coverage_pct,min_visibility")
    for r in rows:
        print(f"{r.method},{r.n},{r.coverage_pct:.2f},{r.min_visibility}")


if __name__ == "__main__":
    main()
