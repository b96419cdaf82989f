import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import camera_basis, line_of_sight
from sensorpose.camera import Intrinsics
from sensorpose.evaluation import (GroundGrid, compare_baseline, coverage_matrix, ecdf, evaluate,
                                   greedy_max_coverage, ground_coverage, make_ground_grid,
                                   solve_coverage_baseline)
from sensorpose.raster import vis_metric
from sensorpose.scene import CanonicalPose, Environment, Frame, GroundRect, ObjectBox, Scenario, VirtualRail

INTR = Intrinsics()


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 1000), min_size=1, max_size=60))
def test_ecdf_is_a_cdf(values):
    steps = ecdf(values)
    xs = [x for x, _ in steps]
    fr = [f for _, f in steps]
    assert xs == sorted(set(values))
    assert all(b >= a for a, b in zip(fr, fr[1:]))
    assert fr[-1] == pytest.approx(1.0)
    for x, f in steps:
        assert f == pytest.approx(sum(v <= x for v in values) / len(values))


def test_evaluate_examples(small_scenario):
    with pytest.raises(ValueError):
        evaluate([], small_scenario)
    pose = CanonicalPose((0.0, 8.0, -16.0), 0.0, math.radians(60))
    rep = evaluate([pose], small_scenario, INTR)
    ref = []
    for f in small_scenario.frames:
        for o in f.objects:
            ref.append(vis_metric(o, [pose], f, small_scenario.environment, INTR))
    assert rep.counts == ref
    assert rep.min_visibility == min(ref)
    assert rep.mean_visibility == pytest.approx(np.mean(ref))
    assert rep.config_hash == evaluate([pose], small_scenario, INTR, threads=2).config_hash


def test_single_object_single_sensor_report():
    box = ObjectBox(0, (0.0, 1.0, 0.0), (2.0, 2.0, 2.0))
    sc = Scenario(Environment((), None), (VirtualRail((0, 1, -12), (1, 1, -12)),), (Frame(0, (box,)),))
    rep = evaluate([CanonicalPose((0.0, 1.0, -10.0), 0.0, math.pi / 2)], sc, INTR)
    assert rep.min_visibility == rep.mean_visibility == rep.counts[0] > 0


def test_ground_grid_within_extent():
    env = Environment((), GroundRect(-3, 5, 0, 4, 0.2))
    grid = make_ground_grid(env, spacing=1.0, lift=0.1)
    assert len(grid.points) == 8 * 4
    assert (grid.points[:, 0] > -3).all() and (grid.points[:, 0] < 5).all()
    assert np.allclose(grid.points[:, 1], 0.3)


def test_coverage_no_sensors_and_full_cover():
    env = Environment((), GroundRect(-2, 2, -2, 2, 0.0))
    grid = make_ground_grid(env, 0.5)
    assert ground_coverage([], grid, env, INTR) == 0.0
    down = CanonicalPose((0.0, 10.0, 0.0), 0.0, 0.0)
    assert ground_coverage([down], grid, env, INTR) == 1.0


def _frustum_oracle(pose, pts, intr):
    x_axis, y_axis, fwd = camera_basis(pose)
    rel = pts - np.asarray(pose.position)
    d = rel @ fwd
    f = 0.5 * intr.width / math.tan(0.5 * intr.hfov)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = 0.5 * intr.width + f * (rel @ x_axis) / d
        v = 0.5 * intr.height + f * (rel @ y_axis) / d
    return (d >= intr.near) & (d <= intr.far) & (u >= 0) & (u <= intr.width) & (v >= 0) & (v <= intr.height)


def test_occluder_shadow_matches_raycast():
    env_open = Environment((), GroundRect(-10, 10, -10, 10, 0.0))
    wall = ObjectBox(0, (0.0, 2.0, 2.0), (12.0, 4.0, 0.5))
    env = Environment((wall,), env_open.ground)
    grid = make_ground_grid(env, 0.5)
    pose = CanonicalPose((0.0, 6.0, -12.0), 0.0, math.radians(55))
    open_cov = ground_coverage([pose], grid, env_open, INTR)
    walled = ground_coverage([pose], grid, env, INTR)
    inside = _frustum_oracle(pose, grid.points, INTR)
    seen = np.array([ok and line_of_sight(p, pose, None, Environment((wall,), None), tol=1e-3)
                     for p, ok in zip(grid.points, inside)])
    assert open_cov == pytest.approx(inside.mean(), abs=0.02)
    shadow = inside.mean() - seen.mean()
    assert shadow > 0.05
    assert open_cov - walled == pytest.approx(shadow, abs=0.02)


def test_greedy_examples():
    assert greedy_max_coverage(np.array([[1, 1, 1, 1], [1, 0, 0, 0]]), 1) == [0]
    disjoint = np.zeros((4, 9), dtype=bool)
    disjoint[0, :2] = disjoint[1, 2:5] = disjoint[2, 5:6] = disjoint[3, 6:9] = True
    # the three largest disjoint sets, largest first (ties to the lower index)
    assert greedy_max_coverage(disjoint, 3) == [1, 3, 0]


def test_greedy_within_bound_of_optimum():
    rng = np.random.default_rng(0)
    for _ in range(100):
        cover = rng.random((8, 15)) < 0.25
        n = int(rng.integers(1, 4))
        greedy = cover[greedy_max_coverage(cover, n)].any(axis=0).sum()
        best = max(cover[list(c)].any(axis=0).sum() for c in combinations(range(8), n))
        assert greedy >= (1 - 1 / math.e) * best - 1e-9


def test_coverage_baseline_picks_widest_view():
    env = Environment((), GroundRect(-5, 5, -5, 5, 0.0))
    grid = make_ground_grid(env, 1.0)
    cands = [CanonicalPose((0.0, 12.0, 0.0), 0.0, 0.0), CanonicalPose((0.0, 2.0, -20.0), 0.0, math.pi / 2)]
    chosen = solve_coverage_baseline(grid, cands, 1, env, INTR)
    assert chosen == [cands[0]]
    assert coverage_matrix(cands, grid, env, INTR).shape == (2, 100)


def test_compare_baseline_consistent_and_deterministic(small_scenario):
    grid_spec = {"positions": 2, "yaws": 4, "pitches": [54.0]}
    rows = compare_baseline(small_scenario, 2, INTR, grid_spec, include_gd=False, spacing=2.0)
    again = compare_baseline(small_scenario, 2, INTR, grid_spec, include_gd=False, spacing=2.0)
    assert [(r.method, r.coverage_pct, r.min_visibility) for r in rows] == \
        [(r.method, r.coverage_pct, r.min_visibility) for r in again]
    grid = make_ground_grid(small_scenario.environment, 2.0)
    for r in rows:
        assert 0 <= r.coverage_pct <= 100
        assert r.coverage_pct == pytest.approx(100 * ground_coverage(r.poses, grid, small_scenario.environment, INTR))
        assert r.min_visibility == evaluate(r.poses, small_scenario, INTR).min_visibility
    ip = next(r for r in rows if r.method == "ip-exhaustive")
    greedy = next(r for r in rows if r.method == "coverage-greedy")
    assert ip.min_visibility >= greedy.min_visibility
    assert isinstance(grid, GroundGrid)
