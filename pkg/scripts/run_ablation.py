"""Occlusion-aware vs frustum-only objective on the demo scenario.

Each seed runs gradient ascent twice from the same initialization and reports the
hard min-visibility of the best poses found.
"""
import argparse
import time

from sensorpose.demo import demo_scenario
from sensorpose.gdopt import HyperParams, optimize_run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--sensors", type=int, default=6)
    ap.add_argument("--epochs", type=int, default=20)
    args = ap.parse_args()
    sc = demo_scenario()
    wins = 0
    print("seed,occlusion_aware,frustum_only,seconds")
    for seed in range(args.seeds):
        t0 = time.perf_counter()
        occ = optimize_run(sc, args.sensors, args.epochs, HyperParams(occlusion=True), seed).best_min_visibility
        plain = optimize_run(sc, args.sensors, args.epochs, HyperParams(occlusion=False), seed).best_min_visibility
        wins += occ >= plain
        print(f"{seed},{occ},{plain},{time.perf_counter() - t0:.1f}")
    print(f"# occlusion-aware >= frustum-only in {wins}/{args.seeds} seeds")


if __name__ == "__main__":
    main()
