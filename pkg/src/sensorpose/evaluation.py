"""Evaluation: per-object visibility report, ECDF, ground coverage and the coverage baseline."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .camera import CameraMatrices, Intrinsics, in_frustum_mask, project_points
from .diffvis import occluded_mask
from .raster import frame_visibility, render_frame
from .scene import CanonicalPose, Environment, Scenario


@dataclass
class EvalReport:
    rows: list[tuple[int, int, int]]  # (frame id, object id, visibility)
    poses: list[CanonicalPose]
    config_hash: str = ""

    @property
    def counts(self) -> list[int]:
        return [r[2] for r in self.rows]

    @property
    def min_visibility(self) -> int:
        return min(self.counts)

    @property
    def mean_visibility(self) -> float:
        return float(np.mean(self.counts))

    @property
    def ecdf(self) -> list[tuple[int, float]]:
        return ecdf(self.counts)


def ecdf(values: Sequence[int]) -> list[tuple[int, float]]:
    """(value, fraction of samples <= value) at each distinct value."""
    vals, cnt = np.unique(np.asarray(values), return_counts=True)
    cum = np.cumsum(cnt) / cnt.sum()
    return [(int(v), float(c)) for v, c in zip(vals, cum)]


def _hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def evaluate(poses: Sequence[CanonicalPose], scenario: Scenario, intr: Intrinsics = Intrinsics(),
             threads: int = 1) -> EvalReport:
    if not poses:
        raise ValueError("evaluate needs at least one pose")

    def one(frame):
        return frame, frame_visibility(frame, scenario.environment, poses, intr)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(threads) as pool:
            per_frame = list(pool.map(one, scenario.frames))
    else:
        per_frame = [one(f) for f in scenario.frames]
    rows = [(f.id, o.id, counts[o.id]) for f, counts in per_frame for o in f.objects]
    from .formats import scenario_to_dict
    h = _hash({"scenario": scenario_to_dict(scenario), "poses": [vars(p) for p in poses], "intr": vars(intr)})
    return EvalReport(rows, list(poses), h)


# -- ground coverage ----------------------------------------------------------------

@dataclass(frozen=True)
class GroundGrid:
    points: np.ndarray
    spacing: float


def make_ground_grid(env: Environment, spacing: float = 1.0, lift: float = 0.1) -> GroundGrid:
    """Regular grid over the ground rectangle, lifted ``lift`` metres above it."""
    g = env.ground
    if g is None:
        raise ValueError("environment has no ground")
    xs = np.arange(g.min_x + 0.5 * spacing, g.max_x, spacing)
    zs = np.arange(g.min_z + 0.5 * spacing, g.max_z, spacing)
    xx, zz = np.meshgrid(xs, zs)
    pts = np.column_stack([xx.ravel(), np.full(xx.size, g.y + lift), zz.ravel()])
    return GroundGrid(pts, spacing)


def ground_visibility(pose: CanonicalPose, grid: GroundGrid, env: Environment, intr: Intrinsics,
                      binary_threshold: float = 0.5) -> np.ndarray:
    """Boolean per ground point: in frustum and not occluded by the environment."""
    db, _ = render_frame(None, env, pose, intr)
    uvd = project_points(grid.points, CameraMatrices.from_pose(pose, intr))
    inside = in_frustum_mask(uvd, intr)
    return inside & ~occluded_mask(uvd, db, binary_threshold)


def coverage_matrix(poses: Sequence[CanonicalPose], grid: GroundGrid, env: Environment,
                    intr: Intrinsics = Intrinsics(), binary_threshold: float = 0.5) -> np.ndarray:
    return np.array([ground_visibility(p, grid, env, intr, binary_threshold) for p in poses]).reshape(
        len(poses), len(grid.points))


def ground_coverage(poses: Sequence[CanonicalPose], grid: GroundGrid, env: Environment,
                    intr: Intrinsics = Intrinsics(), binary_threshold: float = 0.5) -> float:
    """Fraction of ground points seen, un-occluded, by at least one sensor."""
    if len(grid.points) == 0:
        raise ValueError("empty ground grid")
    if not poses:
        return 0.0
    return float(coverage_matrix(poses, grid, env, intr, binary_threshold).any(axis=0).mean())


def greedy_max_coverage(cover: np.ndarray, n: int) -> list[int]:
    """Standard greedy for max coverage; ties go to the lowest index."""
    cover = np.asarray(cover, dtype=bool)
    if n > cover.shape[0]:
        raise ValueError("n exceeds the number of candidates")
    covered = np.zeros(cover.shape[1], dtype=bool)
    chosen: list[int] = []
    for _ in range(n):
        gain = (cover & ~covered).sum(axis=1)
        gain[chosen] = -1
        k = int(np.argmax(gain))
        chosen.append(k)
        covered |= cover[k]
    return chosen


def solve_coverage_baseline(grid: GroundGrid, candidates: Sequence[CanonicalPose], n: int, env: Environment,
                            intr: Intrinsics = Intrinsics(), binary_threshold: float = 0.5) -> list[CanonicalPose]:
    cover = coverage_matrix(candidates, grid, env, intr, binary_threshold)
    return [candidates[i] for i in greedy_max_coverage(cover, n)]


@dataclass
class ComparisonRow:
    method: str
    n: int
    coverage_pct: float
    min_visibility: int
    poses: list[CanonicalPose] = field(default_factory=list)


def compare_baseline(scenario: Scenario, n: int, intr: Intrinsics = Intrinsics(), grid_spec: Optional[dict] = None,
                     hyper=None, gd_runs: int = 3, seed: int = 0, spacing: float = 1.0,
                     lift: float = 0.1, include_gd: bool = True, vm=None) -> list[ComparisonRow]:
    """Coverage-greedy baseline vs object-centric exhaustive IP vs gradient ascent.

    ``grid_spec`` holds build_candidates keyword arguments; ``vm`` may supply a
    prebuilt visibility matrix for that grid.
    """
    from .gdopt import HyperParams, optimize_multirun
    from .ipopt import build_candidates, build_vismatrix, solve_exhaustive
    from .scene import poses_to_canonical

    grid_spec = grid_spec or {"positions": 3, "yaws": 4, "pitches": [54.0]}
    cands = build_candidates(scenario.rails, **grid_spec)
    ground = make_ground_grid(scenario.environment, spacing, lift)
    rows = []

    def row(method, poses):
        cov = ground_coverage(poses, ground, scenario.environment, intr)
        rep = evaluate(poses, scenario, intr)
        rows.append(ComparisonRow(method, n, 100.0 * cov, rep.min_visibility, list(poses)))

    row("coverage-greedy", solve_coverage_baseline(ground, cands.poses, n, scenario.environment, intr))
    vm = vm if vm is not None else build_vismatrix(cands, scenario, intr)
    sol = solve_exhaustive(vm.counts, n)
    row("ip-exhaustive", [cands.poses[i] for i in sol.chosen])
    if include_gd:
        hyper = hyper or HyperParams()
        best, _ = optimize_multirun(scenario, n, gd_runs, hyper.epochs, hyper, seed, intr)
        row("gradient", poses_to_canonical(scenario.rails, best.best_poses))
    return rows
