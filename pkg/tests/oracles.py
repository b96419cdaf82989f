"""Independent reference computations used by the tests.

Nothing here goes through the camera matrices or the rasterizer: pixel rays are
built from the pose's basis vectors and intersected analytically with boxes
and the ground rectangle.
"""
import math

import numpy as np

from sensorpose.scene import GROUND_ID, environment_mesh_id

BACKGROUND = -1


def camera_basis(pose):
    """(right-ish x axis, y axis, forward) of the camera in world coordinates."""
    y, p = pose.yaw, pose.pitch
    fwd = np.array([math.sin(p) * math.sin(y), -math.cos(p), math.sin(p) * math.cos(y)])
    x_axis = np.array([math.cos(y), 0.0, -math.sin(y)])
    y_axis = np.cross(fwd, x_axis)
    return x_axis, y_axis, fwd


def pixel_rays(pose, intr):
    """Ray directions (H, W, 3) whose forward component is 1, so ray t == camera depth."""
    f = 0.5 * intr.width / math.tan(0.5 * intr.hfov)
    x_axis, y_axis, fwd = camera_basis(pose)
    u = (np.arange(intr.width) + 0.5 - 0.5 * intr.width) / f
    v = (np.arange(intr.height) + 0.5 - 0.5 * intr.height) / f
    vv, uu = np.meshgrid(v, u, indexing="ij")
    return uu[..., None] * x_axis + vv[..., None] * y_axis + fwd


def ray_box(origin, dirs, box, near, far):
    """Nearest hit distance in [near, far] per ray, inf when missed."""
    rot = box.rotation
    o = (np.asarray(origin) - np.asarray(box.center)) @ rot
    d = dirs @ rot
    half = 0.5 * np.asarray(box.size)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-half - o) / d
        t2 = (half - o) / d
    lo = np.nanmax(np.minimum(t1, t2), axis=-1)
    hi = np.nanmin(np.maximum(t1, t2), axis=-1)
    hit = hi >= lo
    t = np.where(lo >= near, lo, np.where(hi >= near, hi, np.inf))
    t = np.where(hit & (t <= far), t, np.inf)
    return t


def ray_ground(origin, dirs, ground, near, far):
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (ground.y - origin[1]) / dirs[..., 1]
    p = origin + t[..., None] * dirs
    ok = ((t >= near) & (t <= far) & (p[..., 0] >= ground.min_x) & (p[..., 0] <= ground.max_x)
          & (p[..., 2] >= ground.min_z) & (p[..., 2] <= ground.max_z))
    return np.where(ok, t, np.inf)


def raycast(frame, env, pose, intr):
    """Depth and id images by analytic ray casting; mirrors the rasterizer's id scheme."""
    origin = np.asarray(pose.position)
    dirs = pixel_rays(pose, intr)
    depth = np.full(dirs.shape[:2], np.inf)
    ids = np.full(dirs.shape[:2], BACKGROUND, dtype=np.int32)
    targets = []
    if env.ground is not None:
        targets.append((GROUND_ID, lambda: ray_ground(origin, dirs, env.ground, intr.near, intr.far)))
    for k, b in enumerate(env.boxes):
        targets.append((environment_mesh_id(k), lambda b=b: ray_box(origin, dirs, b, intr.near, intr.far)))
    if frame is not None:
        for o in frame.objects:
            targets.append((o.id, lambda o=o: ray_box(origin, dirs, o, intr.near, intr.far)))
    for mesh_id, fn in sorted(targets, key=lambda x: x[0]):
        t = fn()
        win = t < depth
        depth[win] = t[win]
        ids[win] = mesh_id
    return depth, ids


def line_of_sight(point, pose, frame, env, skip_id=None, tol=1e-6):
    """True if nothing lies strictly between the sensor and ``point``."""
    origin = np.asarray(pose.position)
    seg = np.asarray(point) - origin
    dist = np.linalg.norm(seg)
    d = (seg / dist)[None, :]
    boxes = list(env.boxes) + ([o for o in frame.objects if o.id != skip_id] if frame else [])
    for b in boxes:
        t = ray_box(origin, d, b, 0.0, np.inf)[0]
        if t < dist - tol:
            return False
    if env.ground is not None:
        t = ray_ground(origin, d, env.ground, 0.0, np.inf)[0]
        if t < dist - tol:
            return False
    return True


def brute_force_maxmin(V, n):
    """Exhaustive max-min over all size-n row subsets, written independently of the solver."""
    from itertools import combinations
    best, best_set = -1, None
    for s in combinations(range(len(V)), n):
        z = min(sum(V[i][j] for i in s) for j in range(len(V[0])))
        if z > best:
            best, best_set = z, s
    return best, best_set


def occluded_by_raycast(point, pose, frame, env, kappa):
    """Exact-ray version of the disparity test: the first surface hit on the ray
    through ``point`` lies more than ``kappa`` nearer in camera depth."""
    origin = np.asarray(pose.position)
    seg = np.asarray(point) - origin
    dist = np.linalg.norm(seg)
    d = (seg / dist)[None, :]
    boxes = list(env.boxes) + (list(frame.objects) if frame else [])
    t_hit = min([ray_box(origin, d, b, 0.0, np.inf)[0] for b in boxes]
                + ([ray_ground(origin, d, env.ground, 0.0, np.inf)[0]] if env.ground is not None else [])
                + [dist])
    _, _, fwd = camera_basis(pose)
    return (dist - t_hit) * float(d[0] @ fwd) > kappa
