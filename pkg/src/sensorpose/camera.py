"""Pinhole camera: intrinsics, world-to-camera extrinsics, projection.

Camera frame: +Z is the optical axis, +X and +Y map to increasing u and v.
With yaw = 0 and pitch = pi/2 the camera frame coincides with the world frame,
so the extrinsic rotation is the identity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .scene import CanonicalPose

DEGENERATE_DEPTH = 1e-12


@dataclass(frozen=True)
class Intrinsics:
    width: int = 200
    height: int = 200
    hfov: float = math.pi / 2
    near: float = 1.0
    far: float = 100.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be at least 1x1")
        if not 0.0 < self.hfov < math.pi:
            raise ValueError("hfov must lie in (0, pi)")
        if not 0.0 < self.near < self.far:
            raise ValueError("need 0 < near < far")

    @property
    def focal(self) -> float:
        return 0.5 * self.width / math.tan(0.5 * self.hfov)

    @property
    def principal(self) -> tuple[float, float]:
        return 0.5 * self.width, 0.5 * self.height


class ImagePoint(NamedTuple):
    u: float
    v: float
    d: float

    @property
    def degenerate(self) -> bool:
        return abs(self.d) < DEGENERATE_DEPTH


@dataclass(frozen=True)
class CameraMatrices:
    intrinsic: np.ndarray  # 3x3
    extrinsic: np.ndarray  # 3x4, world -> camera

    @classmethod
    def from_pose(cls, pose: CanonicalPose, intr: Intrinsics) -> "CameraMatrices":
        return cls(intrinsic_matrix(intr), extrinsic_matrix(pose))

    @property
    def rotation(self) -> np.ndarray:
        return self.extrinsic[:, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.extrinsic[:, 3]

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation


def intrinsic_matrix(intr: Intrinsics) -> np.ndarray:
    f = intr.focal
    cx, cy = intr.principal
    return np.array([[f, 0.0, cx], [0.0, f, cy], [0.0, 0.0, 1.0]])


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def world_to_camera_rotation(yaw: float, pitch: float) -> np.ndarray:
    """Yaw about world +Y first, then pitch about the camera X axis."""
    return rot_x(pitch - 0.5 * math.pi) @ rot_y(-yaw)


def extrinsic_matrix(pose: CanonicalPose) -> np.ndarray:
    r = world_to_camera_rotation(pose.yaw, pose.pitch)
    t = -r @ np.asarray(pose.position)
    return np.column_stack([r, t])


def to_camera(points: np.ndarray, cams: CameraMatrices) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    return points @ cams.rotation.T + cams.translation


def project_points(points: np.ndarray, cams: CameraMatrices) -> np.ndarray:
    """Project (n, 3) world points to (n, 3) rows of (u, v, d).

    Points lying in the camera plane (|d| < 1e-12) get u = v = nan.
    """
    q = to_camera(np.atleast_2d(points), cams)
    uvd = q @ cams.intrinsic.T
    d = uvd[:, 2]
    ok = np.abs(d) >= DEGENERATE_DEPTH
    safe = np.where(ok, d, 1.0)
    u = np.where(ok, uvd[:, 0] / safe, np.nan)
    v = np.where(ok, uvd[:, 1] / safe, np.nan)
    return np.column_stack([u, v, d])


def project(p, cams: CameraMatrices) -> ImagePoint:
    u, v, d = project_points(np.asarray(p, dtype=float).reshape(1, 3), cams)[0]
    return ImagePoint(float(u), float(v), float(d))


def unproject_points(u, v, d, cams: CameraMatrices) -> np.ndarray:
    u, v, d = (np.asarray(a, dtype=float) for a in (u, v, d))
    if np.any(d <= 0):
        raise ValueError("unproject needs positive depth")
    kinv = np.linalg.inv(cams.intrinsic)
    pix = np.stack([u * d, v * d, d], axis=-1)
    q = pix @ kinv.T
    return (q - cams.translation) @ cams.rotation


def unproject(ip: ImagePoint, cams: CameraMatrices) -> np.ndarray:
    return unproject_points(ip.u, ip.v, ip.d, cams)


def in_frustum_mask(uvd: np.ndarray, intr: Intrinsics) -> np.ndarray:
    u, v, d = np.asarray(uvd, dtype=float).T
    with np.errstate(invalid="ignore"):
        return ((u >= 0) & (u <= intr.width) & (v >= 0) & (v <= intr.height)
                & (d >= intr.near) & (d <= intr.far))


def in_frustum(ip: ImagePoint, intr: Intrinsics) -> bool:
    return bool(in_frustum_mask(np.array([ip]), intr)[0])
