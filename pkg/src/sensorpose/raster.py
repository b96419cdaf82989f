"""Software z-buffer rasterizer, point-cloud re-projection and the pixel visibility metric."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from numba import njit

from .camera import CameraMatrices, Intrinsics, to_camera, unproject_points
from .scene import CanonicalPose, Environment, Frame, ObjectBox, frame_meshes

BACKGROUND_DEPTH = math.inf
BACKGROUND_ID = -1


@dataclass(frozen=True)
class DepthBuffer:
    """Camera-axis depth per pixel, indexed ``depth[row, col]`` = ``depth[v, u]``."""

    depth: np.ndarray

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def background(self) -> np.ndarray:
        return ~np.isfinite(self.depth)


@dataclass(frozen=True)
class FragmentBuffer:
    """Source mesh id per pixel: object id (>= 0), environment id (<= -2) or -1."""

    ids: np.ndarray

    def count(self, mesh_id: int) -> int:
        return int(np.count_nonzero(self.ids == mesh_id))


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    object_ids: np.ndarray
    sensor_ids: np.ndarray

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)), np.zeros(0, dtype=np.int32), np.zeros(0, dtype=np.int32))

    @classmethod
    def concat(cls, clouds: Iterable["PointCloud"]) -> "PointCloud":
        clouds = list(clouds)
        if not clouds:
            return cls.empty()
        return cls(np.concatenate([c.points for c in clouds]),
                   np.concatenate([c.object_ids for c in clouds]),
                   np.concatenate([c.sensor_ids for c in clouds]))


@njit(cache=True)
def _is_top_left(dx, dy):
    # antisymmetric under edge reversal, so a shared edge is owned by exactly one triangle
    return dy > 0.0 or (dy == 0.0 and dx < 0.0)


@njit(cache=True)
def _fill_triangle(tri, mesh_id, zbuf, ibuf, f, cx, cy, near, far):
    W = zbuf.shape[1]
    H = zbuf.shape[0]
    tu = np.empty(3)
    tv = np.empty(3)
    tz = np.empty(3)
    for i in range(3):
        tz[i] = tri[i, 2]
        tu[i] = f * tri[i, 0] / tz[i] + cx
        tv[i] = f * tri[i, 1] / tz[i] + cy
    c0 = max(math.ceil(tu.min() - 0.5), 0)
    c1 = min(math.floor(tu.max() - 0.5), W - 1)
    r0 = max(math.ceil(tv.min() - 0.5), 0)
    r1 = min(math.floor(tv.max() - 0.5), H - 1)
    if c0 > c1 or r0 > r1:
        return
    area = (tu[1] - tu[0]) * (tv[2] - tv[0]) - (tv[1] - tv[0]) * (tu[2] - tu[0])
    if area == 0.0:
        return
    o0, o1, o2 = (0, 1, 2) if area > 0 else (0, 2, 1)
    order = (o0, o1, o2)
    area = abs(area)
    # edge i is opposite vertex order[i] and runs order[i+1] -> order[i+2]
    ax = np.empty(3)
    ay = np.empty(3)
    dx = np.empty(3)
    dy = np.empty(3)
    tl = np.empty(3, dtype=np.bool_)
    inv = np.empty(3)
    for i in range(3):
        a = order[(i + 1) % 3]
        b = order[(i + 2) % 3]
        ax[i] = tu[a]
        ay[i] = tv[a]
        dx[i] = tu[b] - tu[a]
        dy[i] = tv[b] - tv[a]
        tl[i] = _is_top_left(dx[i], dy[i])
        inv[i] = 1.0 / tz[order[i]]
    for r in range(r0, r1 + 1):
        pv = r + 0.5
        for c in range(c0, c1 + 1):
            pu = c + 0.5
            inside = True
            s = 0.0
            for i in range(3):
                e = dx[i] * (pv - ay[i]) - dy[i] * (pu - ax[i])
                if e < 0.0 or (e == 0.0 and not tl[i]):
                    inside = False
                    break
                s += e * inv[i]
            if not inside:
                continue
            depth = area / s if s > 0.0 else math.inf
            if depth < near:
                depth = near
            if depth <= far and depth < zbuf[r, c]:
                zbuf[r, c] = depth
                ibuf[r, c] = mesh_id


@njit(cache=True)
def _raster_kernel(cam, ids, zbuf, ibuf, f, cx, cy, near, far):
    poly = np.empty((4, 3))
    sub = np.empty((3, 3))
    for k in range(cam.shape[0]):
        tri = cam[k]
        n_in = 0
        zmin = math.inf
        for i in range(3):
            if tri[i, 2] >= near:
                n_in += 1
            zmin = min(zmin, tri[i, 2])
        if n_in == 0 or zmin > far:
            continue
        if n_in == 3:
            _fill_triangle(tri, ids[k], zbuf, ibuf, f, cx, cy, near, far)
            continue
        # Sutherland-Hodgman against z = near
        n = 0
        for i in range(3):
            a = tri[i]
            b = tri[(i + 1) % 3]
            a_in = a[2] >= near
            b_in = b[2] >= near
            if a_in:
                poly[n] = a
                n += 1
            if a_in != b_in:
                s = (near - a[2]) / (b[2] - a[2])
                poly[n] = a + s * (b - a)
                poly[n, 2] = near
                n += 1
        for j in range(1, n - 1):
            sub[0] = poly[0]
            sub[1] = poly[j]
            sub[2] = poly[j + 1]
            _fill_triangle(sub, ids[k], zbuf, ibuf, f, cx, cy, near, far)


def rasterize(meshes: Sequence[tuple[int, np.ndarray]], cams: CameraMatrices,
              intr: Intrinsics) -> tuple[DepthBuffer, FragmentBuffer]:
    """Z-buffer render of ``(mesh_id, triangles)`` pairs.

    Pixel centres are sampled with a top-left fill rule; depth is interpolated
    perspective-correctly (1/z is affine in screen space). Triangles are clipped
    at the near plane and fragments beyond the far plane are dropped. On exactly
    equal depth the lower mesh id wins.
    """
    W, H = intr.width, intr.height
    zbuf = np.full((H, W), BACKGROUND_DEPTH)
    ibuf = np.full((H, W), BACKGROUND_ID, dtype=np.int32)
    if not meshes:
        return DepthBuffer(zbuf), FragmentBuffer(ibuf)
    ordered = sorted(meshes, key=lambda m: m[0])
    arrays = [np.asarray(t, dtype=float).reshape(-1, 3, 3) for _, t in ordered]
    tris = np.concatenate(arrays)
    ids = np.concatenate([np.full(len(a), i, dtype=np.int32) for (i, _), a in zip(ordered, arrays)])
    cam = np.ascontiguousarray(to_camera(tris.reshape(-1, 3), cams).reshape(-1, 3, 3))
    cx, cy = intr.principal
    _raster_kernel(cam, ids, zbuf, ibuf, intr.focal, cx, cy, intr.near, intr.far)
    return DepthBuffer(zbuf), FragmentBuffer(ibuf)


def render_frame(frame: Optional[Frame], env: Environment, pose: CanonicalPose,
                 intr: Intrinsics) -> tuple[DepthBuffer, FragmentBuffer]:
    return rasterize(frame_meshes(frame, env), CameraMatrices.from_pose(pose, intr), intr)


def pixel_centers(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    vv, uu = np.mgrid[0:height, 0:width]
    return uu + 0.5, vv + 0.5


def reproject(db: DepthBuffer, fb: FragmentBuffer, cams: CameraMatrices, sensor_id: int = 0) -> PointCloud:
    """One world point per rendered pixel, tagged with its fragment and sensor ids."""
    mask = ~db.background
    if not mask.any():
        return PointCloud.empty()
    uu, vv = pixel_centers(db.width, db.height)
    pts = unproject_points(uu[mask], vv[mask], db.depth[mask], cams)
    return PointCloud(pts, fb.ids[mask].astype(np.int32), np.full(len(pts), sensor_id, dtype=np.int32))


def depth_lookup(db: DepthBuffer, u, v):
    """Nearest-pixel depth (floor, clamped to the image); inf marks background.

    Non-finite coordinates also return background.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    finite = np.isfinite(u) & np.isfinite(v)
    col = np.clip(np.floor(np.where(finite, u, 0.0)), 0, db.width - 1).astype(np.intp)
    row = np.clip(np.floor(np.where(finite, v, 0.0)), 0, db.height - 1).astype(np.intp)
    out = np.where(finite, db.depth[row, col], BACKGROUND_DEPTH)
    return float(out) if out.ndim == 0 else out


def frame_visibility(frame: Frame, env: Environment, poses: Sequence[CanonicalPose],
                     intr: Intrinsics) -> dict[int, int]:
    """Pixel count per object of ``frame`` summed over all sensors."""
    counts = {o.id: 0 for o in frame.objects}
    for pose in poses:
        _, fb = render_frame(frame, env, pose, intr)
        for oid in counts:
            counts[oid] += fb.count(oid)
    return counts


def vis_metric(obj: ObjectBox, sensors: Sequence[CanonicalPose], frame: Frame, env: Environment,
               intr: Intrinsics) -> int:
    """Number of pixels, over all sensors, whose nearest surface belongs to ``obj``."""
    if obj.id not in {o.id for o in frame.objects}:
        raise ValueError(f"object {obj.id} is not part of frame {frame.id}")
    return frame_visibility(frame, env, sensors, intr)[obj.id]
