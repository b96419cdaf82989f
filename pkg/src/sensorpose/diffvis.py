"""Differentiable visibility score and the mean-visibility objective.

Gradients are derived by hand with respect to each sensor's rail parameters
(t, alpha, beta). The depth buffer and the occlusion gate are held constant
during differentiation; they are re-evaluated whenever the objective is.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .camera import CameraMatrices, ImagePoint, Intrinsics, in_frustum_mask, rot_x, rot_y
from .raster import DepthBuffer, FragmentBuffer, depth_lookup, render_frame
from .scene import (Frame, RailPose, Scenario, VirtualRail, rail_to_canonical, sample_surface_points,
                    sigmoid)


@dataclass(frozen=True)
class DiffParams:
    gamma: float = 1.0
    kappa: float = 0.5

    def __post_init__(self):
        if self.gamma <= 0 or self.kappa <= 0:
            raise ValueError("gamma and kappa must be positive")


def window(z, gamma: float, z0: float, z1: float):
    """Smooth indicator of [z0, z1]: sigma(gamma (z - z0)) - sigma(gamma (z - z1))."""
    return sigmoid(gamma * (np.asarray(z, dtype=float) - z0)) - sigmoid(gamma * (np.asarray(z, dtype=float) - z1))


def window_grad(z, gamma: float, z0: float, z1: float):
    a = sigmoid(gamma * (np.asarray(z, dtype=float) - z0))
    b = sigmoid(gamma * (np.asarray(z, dtype=float) - z1))
    return gamma * (a * (1 - a) - b * (1 - b))


def vis_score_uvd(uvd: np.ndarray, intr: Intrinsics, params: DiffParams) -> np.ndarray:
    u, v, d = np.atleast_2d(uvd).T
    g = params.gamma
    out = window(u, g, 0, intr.width) * window(v, g, 0, intr.height) * window(d, g, intr.near, intr.far)
    return np.nan_to_num(out, nan=0.0)


def vis_score(ip: ImagePoint, intr: Intrinsics, params: DiffParams = DiffParams()) -> float:
    return float(vis_score_uvd(np.array([ip]), intr, params)[0])


def occluded_mask(uvd: np.ndarray, db: DepthBuffer, kappa: float) -> np.ndarray:
    u, v, d = np.atleast_2d(uvd).T
    z = depth_lookup(db, u, v)
    with np.errstate(invalid="ignore"):
        return np.isfinite(z) & (np.abs(d - z) > kappa)


def occluded(ip: ImagePoint, db: DepthBuffer, kappa: float = 0.5) -> bool:
    """Depth-disparity test; a background pixel never occludes."""
    return bool(occluded_mask(np.array([ip]), db, kappa)[0])


def vis_score_all(scores) -> float | np.ndarray:
    """Combine per-sensor scores (sensors along axis 0): 1 - prod(1 - psi)."""
    s = np.asarray(scores, dtype=float)
    out = 1.0 - np.prod(1.0 - s, axis=0)
    return float(out) if np.ndim(out) == 0 else out


# -- pose derivatives -------------------------------------------------------------

def _drot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[0.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s]])


def _drot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s]])


@dataclass
class SensorGeometry:
    """World-to-camera transform of a rail pose and its derivatives w.r.t. (t, alpha, beta)."""

    center: np.ndarray
    rotation: np.ndarray
    d_center_dt: np.ndarray
    d_rot_dalpha: np.ndarray
    d_rot_dbeta: np.ndarray

    @classmethod
    def from_rail(cls, rail: VirtualRail, pose: RailPose) -> "SensorGeometry":
        st, sa, sb = sigmoid(pose.t), sigmoid(pose.alpha), sigmoid(pose.beta)
        yaw, pitch = 2 * math.pi * sa, math.pi * sb
        ax = pitch - 0.5 * math.pi
        rx, ry = rot_x(ax), rot_y(-yaw)
        return cls(
            center=rail.point_at(st),
            rotation=rx @ ry,
            d_center_dt=rail.direction * st * (1 - st),
            d_rot_dalpha=-(rx @ _drot_y(-yaw)) * 2 * math.pi * sa * (1 - sa),
            d_rot_dbeta=(_drot_x(ax) @ ry) * math.pi * sb * (1 - sb),
        )


def _project_with_jacobian(points: np.ndarray, geo: SensorGeometry, intr: Intrinsics):
    """(u, v, d) per point plus d(u, v, d)/d(t, alpha, beta) of shape (n, 3, 3)."""
    rel = points - geo.center
    q = rel @ geo.rotation.T
    dq = np.empty((len(points), 3, 3))  # [point, q component, param]
    dq[:, :, 0] = -(geo.rotation @ geo.d_center_dt)
    dq[:, :, 1] = rel @ geo.d_rot_dalpha.T
    dq[:, :, 2] = rel @ geo.d_rot_dbeta.T
    f = intr.focal
    cx, cy = intr.principal
    qz = q[:, 2]
    degenerate = np.abs(qz) < 1e-9
    qz_safe = np.where(degenerate, 1.0, qz)
    u = f * q[:, 0] / qz_safe + cx
    v = f * q[:, 1] / qz_safe + cy
    jac = np.empty_like(dq)
    jac[:, 0] = f * (dq[:, 0] * qz_safe[:, None] - q[:, 0, None] * dq[:, 2]) / qz_safe[:, None] ** 2
    jac[:, 1] = f * (dq[:, 1] * qz_safe[:, None] - q[:, 1, None] * dq[:, 2]) / qz_safe[:, None] ** 2
    jac[:, 2] = dq[:, 2]
    uvd = np.column_stack([u, v, qz])
    uvd[degenerate, :2] = np.nan
    jac[degenerate] = 0.0
    return uvd, jac


def score_points(points: np.ndarray, geo: SensorGeometry, intr: Intrinsics, params: DiffParams,
                 db: Optional[DepthBuffer] = None, gate: Optional[np.ndarray] = None):
    """Per-point score for one sensor and its gradient w.r.t. (t, alpha, beta).

    The occlusion gate applies only to in-frustum points; outside the frustum the
    plain score is kept. ``gate`` (True = occluded) overrides the depth test.
    Returns (psi, dpsi, occluded, uvd).
    """
    uvd, jac = _project_with_jacobian(points, geo, intr)
    u, v, d = uvd.T
    g = params.gamma
    wu, wv, wd = window(u, g, 0, intr.width), window(v, g, 0, intr.height), window(d, g, intr.near, intr.far)
    gu = window_grad(u, g, 0, intr.width)
    gv = window_grad(v, g, 0, intr.height)
    gd = window_grad(d, g, intr.near, intr.far)
    bad = ~np.isfinite(u)
    psi = np.where(bad, 0.0, np.nan_to_num(wu * wv * wd))
    dpsi_duvd = np.nan_to_num(np.column_stack([gu * wv * wd, wu * gv * wd, wu * wv * gd]))
    dpsi = np.einsum("nk,nkp->np", dpsi_duvd, jac)
    if gate is None:
        if db is None:
            gate = np.zeros(len(points), dtype=bool)
        else:
            gate = in_frustum_mask(uvd, intr) & occluded_mask(uvd, db, params.kappa)
    psi = np.where(gate, 0.0, psi)
    dpsi[gate] = 0.0
    return psi, dpsi, gate, uvd


def vis_score_occ(p, rail: VirtualRail, pose: RailPose, db: DepthBuffer, intr: Intrinsics,
                  params: DiffParams = DiffParams()) -> float:
    psi, _, _, _ = score_points(np.asarray(p, dtype=float).reshape(1, 3), SensorGeometry.from_rail(rail, pose),
                                intr, params, db)
    return float(psi[0])


# -- objective --------------------------------------------------------------------

@dataclass
class ScoreBundle:
    """Per-frame target points, per-sensor scores (N, n) and combined scores (n,)."""

    points: list[np.ndarray] = field(default_factory=list)
    per_sensor: list[np.ndarray] = field(default_factory=list)
    per_point: list[np.ndarray] = field(default_factory=list)
    occluded: list[np.ndarray] = field(default_factory=list)
    objective: float = 0.0


@dataclass
class ObjectiveResult:
    value: float
    grad: np.ndarray  # (N, 3): d objective / d (t, alpha, beta) per sensor
    bundle: ScoreBundle
    counts: list[dict[int, int]]  # per frame: object id -> pixel count over all sensors


def sample_frame_points(frame: Frame, count: int, rng_seed: int, frame_index: int) -> np.ndarray:
    rng = np.random.default_rng([rng_seed, frame_index])
    return np.concatenate([sample_surface_points(o, count, rng=rng) for o in frame.objects])


def evaluate_objective(scenario: Scenario, poses: Sequence[RailPose], count: int = 400,
                       params: DiffParams = DiffParams(), rng_seed: int = 0,
                       intr: Intrinsics = Intrinsics(), occlusion: bool = True,
                       frames: Optional[Sequence[Frame]] = None,
                       gates: Optional[list[list[np.ndarray]]] = None) -> ObjectiveResult:
    """Mean over frames of the mean combined point score, with its gradient.

    Each frame is rendered once per sensor; the fragment buffers also give the
    integer pixel counts per object, returned in ``counts``. ``gates`` freezes
    the occlusion decision per frame and sensor (used by finite-difference checks).
    """
    if not poses:
        raise ValueError("need at least one sensor")
    frames = scenario.frames if frames is None else frames
    geos = [SensorGeometry.from_rail(scenario.rails[p.rail_index], p) for p in poses]
    canon = [rail_to_canonical(scenario.rails[p.rail_index], p) for p in poses]
    n_sensors = len(poses)
    total = 0.0
    grad = np.zeros((n_sensors, 3))
    bundle = ScoreBundle()
    counts = []
    for fi, frame in enumerate(frames):
        pts = sample_frame_points(frame, count, rng_seed, fi)
        psi = np.empty((n_sensors, len(pts)))
        dpsi = np.empty((n_sensors, len(pts), 3))
        occ = np.zeros((n_sensors, len(pts)), dtype=bool)
        frame_counts = {o.id: 0 for o in frame.objects}
        for s in range(n_sensors):
            db, fb = render_frame(frame, scenario.environment, canon[s], intr)
            for oid in frame_counts:
                frame_counts[oid] += fb.count(oid)
            gate = None
            if not occlusion:
                gate = np.zeros(len(pts), dtype=bool)
            elif gates is not None:
                gate = gates[fi][s]
            psi[s], dpsi[s], occ[s], _ = score_points(pts, geos[s], intr, params, db, gate)
        combined = vis_score_all(psi)
        total += combined.mean()
        one_minus = 1.0 - psi
        for s in range(n_sensors):
            others = np.prod(np.delete(one_minus, s, axis=0), axis=0)
            grad[s] += (others[:, None] * dpsi[s]).mean(axis=0)
        bundle.points.append(pts)
        bundle.per_sensor.append(psi)
        bundle.per_point.append(np.atleast_1d(combined))
        bundle.occluded.append(occ)
        counts.append(frame_counts)
    value = total / len(frames)
    bundle.objective = value
    return ObjectiveResult(value, grad / len(frames), bundle, counts)


def objective(scenario: Scenario, poses: Sequence[RailPose], count: int = 400,
              params: DiffParams = DiffParams(), rng_seed: int = 0, **kw) -> tuple[float, ScoreBundle]:
    res = evaluate_objective(scenario, poses, count, params, rng_seed, **kw)
    return res.value, res.bundle


def gradient(scenario: Scenario, poses: Sequence[RailPose], count: int = 400,
             params: DiffParams = DiffParams(), rng_seed: int = 0, **kw) -> np.ndarray:
    """d objective / d (t, alpha, beta), shape (N, 3)."""
    return evaluate_objective(scenario, poses, count, params, rng_seed, **kw).grad


def _shift(poses: Sequence[RailPose], s: int, k: int, h: float) -> list[RailPose]:
    out = list(poses)
    p = out[s]
    vals = [p.t, p.alpha, p.beta]
    vals[k] += h
    out[s] = RailPose(p.rail_index, *vals)
    return out


@dataclass
class GradientCheck:
    analytic: np.ndarray
    numeric: np.ndarray
    gate_flip: np.ndarray  # (N, 3) True where the occlusion gate changed within +-h

    def relative_error(self) -> np.ndarray:
        scale = np.maximum(np.abs(self.numeric), 1e-300)
        return np.abs(self.analytic - self.numeric) / scale


def finite_difference_check(scenario: Scenario, poses: Sequence[RailPose], count: int = 400,
                            params: DiffParams = DiffParams(), rng_seed: int = 0, h: float = 1e-4,
                            **kw) -> GradientCheck:
    """Central differences of the rendered objective, flagging gate flips."""
    base = evaluate_objective(scenario, poses, count, params, rng_seed, **kw)
    numeric = np.zeros_like(base.grad)
    flips = np.zeros(base.grad.shape, dtype=bool)
    for s in range(len(poses)):
        for k in range(3):
            plus = evaluate_objective(scenario, _shift(poses, s, k, h), count, params, rng_seed, **kw)
            minus = evaluate_objective(scenario, _shift(poses, s, k, -h), count, params, rng_seed, **kw)
            numeric[s, k] = (plus.value - minus.value) / (2 * h)
            flips[s, k] = any(
                not (np.array_equal(a, b) and np.array_equal(a, c))
                for a, b, c in zip(base.bundle.occluded, plus.bundle.occluded, minus.bundle.occluded))
    return GradientCheck(base.grad, numeric, flips)


def write_point_scores(path, bundle: ScoreBundle) -> None:
    """CSV of x, y, z, psi for every target point (heat-map dumps)."""
    pts = np.concatenate(bundle.points)
    psi = np.concatenate(bundle.per_point)
    with open(path, "w") as fh:
        fh.write("x,y,z,psi\n")
        for (x, y, z), s in zip(pts, psi):
            fh.write(f"{x:.6f},{y:.6f},{z:.6f},{s:.8f}\n")
