"""Scene geometry: target boxes, frames, environment, virtual rails.

World frame is right-handed with +Y up; the ground is the plane ``y = ground.y``.
Box yaw rotates the box about the vertical (+Y) axis; in the box's local frame
the width runs along x, the height along y and the length along z.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


def _vec3(v) -> tuple[float, float, float]:
    a = np.asarray(v, dtype=float).reshape(3)
    return (float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class ObjectBox:
    """Cuboid defined by its centre, size (w, h, l) and yaw about +Y."""

    id: int
    center: tuple[float, float, float]
    size: tuple[float, float, float]
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", _vec3(self.center))
        object.__setattr__(self, "size", _vec3(self.size))
        object.__setattr__(self, "yaw", float(self.yaw))
        if min(self.size) <= 0:
            raise ValueError(f"box {self.id}: size components must be positive, got {self.size}")
        if not 0.0 <= self.yaw < TWO_PI:
            raise ValueError(f"box {self.id}: yaw must lie in [0, 2pi), got {self.yaw}")

    @property
    def rotation(self) -> np.ndarray:
        """Local-to-world rotation matrix."""
        return rot_y(self.yaw)

    def corners(self) -> np.ndarray:
        """The 8 corners in world coordinates, indexed by bit pattern (x, y, z)."""
        half = 0.5 * np.asarray(self.size)
        signs = np.array([[(i >> 2) & 1, (i >> 1) & 1, i & 1] for i in range(8)], dtype=float) * 2 - 1
        return (signs * half) @ self.rotation.T + np.asarray(self.center)

    def to_local(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=float) - np.asarray(self.center)) @ self.rotation

    def footprint(self) -> np.ndarray:
        """Footprint polygon as 4 (x, z) vertices in counter-clockwise order."""
        w, _, l = self.size
        local = np.array([[-w, -l], [w, -l], [w, l], [-w, l]]) * 0.5
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        # local (x, z) -> world (x, z) under rot_y
        xz = np.column_stack([c * local[:, 0] + s * local[:, 1], -s * local[:, 0] + c * local[:, 1]])
        return xz + np.array([self.center[0], self.center[2]])


@dataclass(frozen=True)
class Frame:
    id: int
    objects: tuple[ObjectBox, ...]

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        if not self.objects:
            raise ValueError(f"frame {self.id} has no objects")
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError(f"frame {self.id}: duplicate object ids")
        if min(ids) < 0:
            raise ValueError(f"frame {self.id}: object ids must be non-negative")


@dataclass(frozen=True)
class GroundRect:
    min_x: float
    max_x: float
    min_z: float
    max_z: float
    y: float = 0.0

    def __post_init__(self):
        if not (self.max_x > self.min_x and self.max_z > self.min_z):
            raise ValueError("ground rectangle must have positive extent")


@dataclass(frozen=True)
class Environment:
    boxes: tuple[ObjectBox, ...] = ()
    ground: Optional[GroundRect] = None

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))


@dataclass(frozen=True)
class VirtualRail:
    p1: tuple[float, float, float]
    p2: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "p1", _vec3(self.p1))
        object.__setattr__(self, "p2", _vec3(self.p2))
        if self.p1 == self.p2:
            raise ValueError("virtual rail end points must differ")

    @property
    def direction(self) -> np.ndarray:
        return np.asarray(self.p2) - np.asarray(self.p1)

    def point_at(self, fraction: float) -> np.ndarray:
        return np.asarray(self.p1) + fraction * self.direction


@dataclass(frozen=True)
class RailPose:
    """Unbounded rail parameters of a sensor (position t, yaw alpha, pitch beta)."""

    rail_index: int
    t: float
    alpha: float
    beta: float

    @property
    def params(self) -> np.ndarray:
        return np.array([self.t, self.alpha, self.beta])


@dataclass(frozen=True)
class CanonicalPose:
    """Sensor pose: position, yaw about +Y and pitch measured from straight down.

    pitch = 0 looks down (-Y), pitch = pi/2 looks horizontally along the yaw
    heading (sin yaw, 0, cos yaw), pitch = pi looks up. Roll is always 0.
    """

    position: tuple[float, float, float]
    yaw: float
    pitch: float
    roll: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position))
        if self.roll != 0.0:
            raise ValueError("roll is fixed to 0")
        if not (0.0 <= self.yaw <= TWO_PI and 0.0 <= self.pitch <= math.pi):
            raise ValueError(f"yaw/pitch out of range: {self.yaw}, {self.pitch}")

    @property
    def forward(self) -> np.ndarray:
        sp = math.sin(self.pitch)
        return np.array([sp * math.sin(self.yaw), -math.cos(self.pitch), sp * math.cos(self.yaw)])


@dataclass(frozen=True)
class Scenario:
    environment: Environment
    rails: tuple[VirtualRail, ...]
    frames: tuple[Frame, ...]
    focus_point: Optional[tuple[float, float, float]] = None

    def __post_init__(self):
        object.__setattr__(self, "rails", tuple(self.rails))
        object.__setattr__(self, "frames", tuple(self.frames))
        if not self.rails:
            raise ValueError("scenario needs at least one rail")
        if not self.frames:
            raise ValueError("scenario needs at least one frame")
        if self.focus_point is not None:
            object.__setattr__(self, "focus_point", _vec3(self.focus_point))

    @property
    def n_objects(self) -> int:
        return sum(len(f.objects) for f in self.frames)


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def sigmoid(z):
    """Logistic function, stable for large |z|; works on scalars and arrays."""
    z = np.asarray(z, dtype=float)
    ez = np.exp(-np.abs(z))
    out = np.where(z >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))
    return float(out) if out.ndim == 0 else out


def logit(p):
    p = np.asarray(p, dtype=float)
    out = np.log(p) - np.log1p(-p)
    return float(out) if out.ndim == 0 else out


def rail_to_canonical(rail: VirtualRail, pose: RailPose) -> CanonicalPose:
    position = rail.point_at(sigmoid(pose.t))
    return CanonicalPose(position, TWO_PI * sigmoid(pose.alpha), math.pi * sigmoid(pose.beta))


def poses_to_canonical(rails: Sequence[VirtualRail], poses: Sequence[RailPose]) -> list[CanonicalPose]:
    return [rail_to_canonical(rails[p.rail_index], p) for p in poses]


# Faces as corner-index quads (bit pattern x<<2 | y<<1 | z), ordered so the
# right-hand normal points outward.
_FACES = (
    (0, 1, 3, 2),  # -x
    (4, 6, 7, 5),  # +x
    (0, 4, 5, 1),  # -y
    (2, 3, 7, 6),  # +y
    (0, 2, 6, 4),  # -z
    (1, 5, 7, 3),  # +z
)


def box_to_mesh(box: ObjectBox) -> np.ndarray:
    """Triangulate a box into 12 outward-wound triangles, shape (12, 3, 3)."""
    c = box.corners()
    tris = []
    for a, b, cc, d in _FACES:
        tris.append((c[a], c[b], c[cc]))
        tris.append((c[a], c[cc], c[d]))
    return np.array(tris)


def ground_to_mesh(ground: GroundRect) -> np.ndarray:
    y = ground.y
    a = (ground.min_x, y, ground.min_z)
    b = (ground.max_x, y, ground.min_z)
    c = (ground.max_x, y, ground.max_z)
    d = (ground.min_x, y, ground.max_z)
    # normal +Y
    return np.array([(a, d, c), (a, c, b)], dtype=float)


def face_areas(box: ObjectBox) -> np.ndarray:
    """Areas of the six faces in the order -x, +x, -y, +y, -z, +z."""
    w, h, l = box.size
    return np.array([h * l, h * l, w * l, w * l, w * h, w * h])


def sample_surface_points(box: ObjectBox, count: int, rng_seed=None, rng: Optional[np.random.Generator] = None,
                          return_faces: bool = False):
    """Draw ``count`` points uniformly over the box surface.

    Faces are chosen with probability proportional to their area, then a point
    is drawn uniformly on the chosen face.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if rng is None:
        rng = np.random.default_rng(rng_seed)
    areas = face_areas(box)
    faces = rng.choice(6, size=count, p=areas / areas.sum())
    axis = faces // 2
    sign = np.where(faces % 2 == 0, -1.0, 1.0)
    uv = rng.random((count, 3)) - 0.5
    local = uv * np.asarray(box.size)
    rows = np.arange(count)
    local[rows, axis] = sign * 0.5 * np.asarray(box.size)[axis]
    world = local @ box.rotation.T + np.asarray(box.center)
    return (world, faces) if return_faces else world


def distance_to_box_surface(box: ObjectBox, points: np.ndarray) -> np.ndarray:
    """Unsigned distance from points to the surface of a box."""
    local = np.abs(box.to_local(np.atleast_2d(points)))
    half = 0.5 * np.asarray(box.size)
    q = local - half
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
    inside = -np.max(q, axis=1)
    return np.where(np.all(q <= 0, axis=1), inside, outside)


def footprints_overlap(a: ObjectBox, b: ObjectBox) -> bool:
    """Separating-axis test on the two ground footprints."""
    pa, pb = a.footprint(), b.footprint()
    for poly in (pa, pb):
        for i in range(4):
            edge = poly[(i + 1) % 4] - poly[i]
            axis = np.array([-edge[1], edge[0]])
            ra, rb = pa @ axis, pb @ axis
            if ra.max() <= rb.min() or rb.max() <= ra.min():
                return False
    return True


# -- synthetic frame generation ------------------------------------------------

@dataclass
class Lane:
    """Axis-aligned rectangle on the ground holding object centres; heading is the travel yaw."""

    min_x: float
    max_x: float
    min_z: float
    max_z: float
    heading: float
    weight: float = 1.0


@dataclass
class GeneratorConfig:
    lanes: list[Lane]
    count_range: tuple[int, int] = (2, 6)
    width_range: tuple[float, float] = (1.7, 2.0)
    height_range: tuple[float, float] = (1.4, 1.8)
    length_range: tuple[float, float] = (4.0, 4.8)
    yaw_jitter: float = 0.1
    ground_y: float = 0.0
    max_retries: int = 200
    n_frames: int = 20

    def __post_init__(self):
        lo, hi = self.count_range
        if not 1 <= lo <= hi:
            raise ValueError(f"invalid count range {self.count_range}")
        if not self.lanes:
            raise ValueError("generator needs at least one lane")


class PlacementError(ValueError):
    pass


def generate_frames(config: GeneratorConfig, rng_seed: int, n_frames: Optional[int] = None) -> list[Frame]:
    """Place non-overlapping boxes on lanes, one independent draw per frame."""
    n_frames = config.n_frames if n_frames is None else n_frames
    rng = np.random.default_rng(rng_seed)
    weights = np.array([lane.weight for lane in config.lanes], dtype=float)
    weights /= weights.sum()
    frames = []
    for fid in range(n_frames):
        count = int(rng.integers(config.count_range[0], config.count_range[1] + 1))
        placed: list[ObjectBox] = []
        for oid in range(count):
            for _ in range(config.max_retries):
                lane = config.lanes[int(rng.choice(len(config.lanes), p=weights))]
                w = rng.uniform(*config.width_range)
                h = rng.uniform(*config.height_range)
                l = rng.uniform(*config.length_range)
                x = rng.uniform(lane.min_x, lane.max_x)
                z = rng.uniform(lane.min_z, lane.max_z)
                yaw = (lane.heading + rng.uniform(-config.yaw_jitter, config.yaw_jitter)) % TWO_PI
                cand = ObjectBox(oid, (x, config.ground_y + 0.5 * h, z), (w, h, l), yaw)
                if not any(footprints_overlap(cand, other) for other in placed):
                    placed.append(cand)
                    break
            else:
                raise PlacementError(
                    f"frame {fid}: could not place object {oid} after {config.max_retries} retries; "
                    "reduce count_range or enlarge lanes")
        frames.append(Frame(fid, tuple(placed)))
    return frames


# -- meshes for rendering ---------------------------------------------------------

GROUND_ID = -2


def environment_mesh_id(index: int) -> int:
    """Fragment id of the ``index``-th environment box (ground is -2, background -1)."""
    return -3 - index


def environment_meshes(env: Environment) -> list[tuple[int, np.ndarray]]:
    meshes = []
    if env.ground is not None:
        meshes.append((GROUND_ID, ground_to_mesh(env.ground)))
    for k, box in enumerate(env.boxes):
        meshes.append((environment_mesh_id(k), box_to_mesh(box)))
    return meshes


def frame_meshes(frame: Optional[Frame], env: Environment) -> list[tuple[int, np.ndarray]]:
    meshes = environment_meshes(env)
    if frame is not None:
        meshes.extend((o.id, box_to_mesh(o)) for o in frame.objects)
    return meshes
