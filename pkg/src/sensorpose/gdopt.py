"""Gradient-ascent pose optimisation over virtual rails (Adam)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .camera import Intrinsics
from .diffvis import DiffParams, evaluate_objective
from .raster import frame_visibility
from .scene import RailPose, Scenario, VirtualRail, logit, poses_to_canonical


@dataclass
class HyperParams:
    lr: float = 0.1
    epochs: int = 20
    runs: int = 10
    points_per_object: int = 400
    gamma: float = 1.0
    kappa: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    occlusion: bool = True
    use_focus: bool = True

    @property
    def diff_params(self) -> DiffParams:
        return DiffParams(self.gamma, self.kappa)


@dataclass
class AdamState:
    lr: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    step: int = 0


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """One bias-corrected Adam ascent step; updates ``state`` in place."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if state.m is None:
        state.m = np.zeros_like(params)
        state.v = np.zeros_like(params)
    if state.m.shape != params.shape or grads.shape != params.shape:
        raise ValueError("parameter, gradient and moment shapes differ")
    state.step += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1 - state.beta2) * grads ** 2
    m_hat = state.m / (1 - state.beta1 ** state.step)
    v_hat = state.v / (1 - state.beta2 ** state.step)
    return params + state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


_FRACTION_CLIP = 1e-6


def look_at_params(position: np.ndarray, target: np.ndarray) -> Optional[tuple[float, float]]:
    """(alpha, beta) whose optical axis passes through ``target``; None if they coincide."""
    v = np.asarray(target, dtype=float) - np.asarray(position, dtype=float)
    norm = np.linalg.norm(v)
    if norm < 1e-9:
        return None
    yaw = math.atan2(v[0], v[2]) % (2 * math.pi)
    pitch = math.acos(float(np.clip(-v[1] / norm, -1.0, 1.0)))
    fy = float(np.clip(yaw / (2 * math.pi), _FRACTION_CLIP, 1 - _FRACTION_CLIP))
    fp = float(np.clip(pitch / math.pi, _FRACTION_CLIP, 1 - _FRACTION_CLIP))
    return logit(fy), logit(fp)


def init_poses(rails: Sequence[VirtualRail], n: int, rng_seed: int,
               focus_point=None) -> list[RailPose]:
    if n < 1:
        raise ValueError("need at least one sensor")
    rng = np.random.default_rng(rng_seed)
    poses = []
    for _ in range(n):
        rail_index = int(rng.integers(len(rails)))
        t = float(rng.uniform(-2, 2))
        alpha, beta = (float(x) for x in rng.uniform(-2, 2, size=2))
        if focus_point is not None:
            position = rails[rail_index].point_at(1 / (1 + math.exp(-t)))
            aimed = look_at_params(position, focus_point)
            if aimed is not None:
                alpha, beta = aimed
        poses.append(RailPose(rail_index, t, alpha, beta))
    return poses


def min_visibility(scenario: Scenario, poses: Sequence[RailPose], intr: Intrinsics = Intrinsics()) -> int:
    canon = poses_to_canonical(scenario.rails, poses)
    return min(min(frame_visibility(f, scenario.environment, canon, intr).values()) for f in scenario.frames)


@dataclass
class RunResult:
    best_poses: list[RailPose]
    best_min_visibility: int
    trace: list[float]
    rail_assignment: list[int]
    seed: int
    initial_min_visibility: int = 0
    min_visibility_trace: list[int] = field(default_factory=list)
    final_objective: float = 0.0

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "rail_assignment": self.rail_assignment,
            "best_min_visibility": self.best_min_visibility,
            "initial_min_visibility": self.initial_min_visibility,
            "final_objective": self.final_objective,
            "objective_trace": self.trace,
            "min_visibility_trace": self.min_visibility_trace,
            "best_poses": [{"rail_index": p.rail_index, "t": p.t, "alpha": p.alpha, "beta": p.beta}
                           for p in self.best_poses],
        }


def _with_params(poses: Sequence[RailPose], params: np.ndarray) -> list[RailPose]:
    return [RailPose(p.rail_index, *map(float, row)) for p, row in zip(poses, params)]


def optimize_run(scenario: Scenario, n_sensors: int, epochs: int, hyper: HyperParams = HyperParams(),
                 rng_seed: int = 0, intr: Intrinsics = Intrinsics(),
                 initial: Optional[Sequence[RailPose]] = None) -> RunResult:
    """One gradient-ascent run with a fixed random rail assignment.

    Each epoch evaluates the objective over all frames (fresh target points per
    epoch), reads the integer min-visibility off the same renders, keeps the
    poses with the best min-visibility seen so far and takes one Adam step.
    The poses after the last step are evaluated too.
    """
    focus = scenario.focus_point if hyper.use_focus else None
    poses = list(initial) if initial is not None else init_poses(scenario.rails, n_sensors, rng_seed, focus)
    params = np.array([p.params for p in poses])
    state = AdamState(hyper.lr, hyper.beta1, hyper.beta2, hyper.eps)
    trace: list[float] = []
    metric_trace: list[int] = []
    best_poses, best_metric, initial_metric = list(poses), -1, None
    last_value = 0.0
    for epoch in range(epochs + 1):
        current = _with_params(poses, params)
        res = evaluate_objective(scenario, current, hyper.points_per_object, hyper.diff_params,
                                 rng_seed=rng_seed * 1_000_003 + epoch, intr=intr, occlusion=hyper.occlusion)
        metric = min(min(c.values()) for c in res.counts)
        if initial_metric is None:
            initial_metric = metric
        metric_trace.append(metric)
        if metric > best_metric:
            best_metric, best_poses = metric, current
        last_value = res.value
        if epoch == epochs:
            break
        trace.append(res.value)
        params = adam_step(state, params, res.grad)
    return RunResult(best_poses, best_metric, trace, [p.rail_index for p in poses], rng_seed,
                     initial_metric, metric_trace, last_value)


def optimize_multirun(scenario: Scenario, n_sensors: int, runs: int, epochs: int,
                      hyper: HyperParams = HyperParams(), master_seed: int = 0,
                      intr: Intrinsics = Intrinsics(), threads: int = 1) -> tuple[RunResult, list[RunResult]]:
    """Best of ``runs`` independent runs (seeds master_seed, master_seed + 1, ...).

    Ranked by best min-visibility, then final objective, then lower seed.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    seeds = [master_seed + r for r in range(runs)]

    def one(seed):
        return optimize_run(scenario, n_sensors, epochs, hyper, seed, intr)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, seeds))
    else:
        results = [one(s) for s in seeds]
    best = max(results, key=lambda r: (r.best_min_visibility, r.final_objective, -r.seed))
    return best, results
