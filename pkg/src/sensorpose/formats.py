"""File formats: scenario/pose JSON, visibility-matrix binary, PLY, buffer dumps, CSV."""
from __future__ import annotations

import json
import math
import os
import struct
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .raster import BACKGROUND_ID, DepthBuffer, FragmentBuffer, PointCloud
from .scene import (CanonicalPose, Environment, Frame, GeneratorConfig, GroundRect, Lane, ObjectBox,
                    RailPose, Scenario, VirtualRail)


class FormatError(ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, path, message, line=None):
        self.path, self.line = str(path), line
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")


def atomic_write(path, data: bytes | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_json(path):
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(path, exc.msg, exc.lineno) from None


def dump_json(path, obj) -> None:
    atomic_write(path, json.dumps(obj, indent=1, sort_keys=False) + "\n")


# -- scenario ---------------------------------------------------------------------

def _box_dict(b: ObjectBox, with_id=True) -> dict:
    d = {"center": list(b.center), "size": list(b.size), "yaw": b.yaw}
    return {"id": b.id, **d} if with_id else d


def scenario_to_dict(sc: Scenario) -> dict:
    env = sc.environment
    out = {
        "environment": {
            "ground": None if env.ground is None else {
                "min_x": env.ground.min_x, "max_x": env.ground.max_x,
                "min_z": env.ground.min_z, "max_z": env.ground.max_z, "y": env.ground.y},
            "boxes": [_box_dict(b, with_id=False) for b in env.boxes],
        },
        "rails": [{"p1": list(r.p1), "p2": list(r.p2)} for r in sc.rails],
        "frames": [{"id": f.id, "objects": [_box_dict(o) for o in f.objects]} for f in sc.frames],
    }
    if sc.focus_point is not None:
        out["focus_point"] = list(sc.focus_point)
    return out


def _box_from(d: dict, box_id: int) -> ObjectBox:
    return ObjectBox(int(d.get("id", box_id)), d["center"], d["size"], float(d.get("yaw", 0.0)) % (2 * math.pi))


def scenario_from_dict(d: dict) -> Scenario:
    env_d = d.get("environment", {})
    g = env_d.get("ground")
    ground = None if g is None else GroundRect(g["min_x"], g["max_x"], g["min_z"], g["max_z"], g.get("y", 0.0))
    boxes = tuple(_box_from(b, k) for k, b in enumerate(env_d.get("boxes", [])))
    rails = tuple(VirtualRail(r["p1"], r["p2"]) for r in d["rails"])
    frames = tuple(Frame(int(f.get("id", k)), tuple(_box_from(o, j) for j, o in enumerate(f["objects"])))
                   for k, f in enumerate(d["frames"]))
    return Scenario(Environment(boxes, ground), rails, frames, d.get("focus_point"))


def load_scenario(path) -> Scenario:
    data = load_json(path)
    try:
        return scenario_from_dict(data)
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise FormatError(path, f"invalid scenario: {exc!r}") from None


def save_scenario(path, sc: Scenario) -> None:
    dump_json(path, scenario_to_dict(sc))


def generator_config_from_dict(d: dict) -> GeneratorConfig:
    lanes = [Lane(**lane) for lane in d["lanes"]]
    kw = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()
          if k not in ("lanes", "environment", "rails", "focus_point")}
    return GeneratorConfig(lanes=lanes, **kw)


# -- poses ------------------------------------------------------------------------

def poses_to_dict(rail_poses: Sequence[RailPose] = (), canonical: Sequence[CanonicalPose] = ()) -> dict:
    return {
        "rail_poses": [{"rail_index": p.rail_index, "t": p.t, "alpha": p.alpha, "beta": p.beta} for p in rail_poses],
        "canonical_poses": [{"position": list(p.position), "yaw": p.yaw, "pitch": p.pitch} for p in canonical],
    }


def load_poses(path, rails: Sequence[VirtualRail]) -> list[CanonicalPose]:
    """Canonical poses from a pose file (rail poses are converted through their rails)."""
    from .scene import rail_to_canonical
    d = load_json(path)
    try:
        out = [rail_to_canonical(rails[p["rail_index"]], RailPose(p["rail_index"], p["t"], p["alpha"], p["beta"]))
               for p in d.get("rail_poses", [])]
        out += [CanonicalPose(p["position"], p["yaw"], p["pitch"]) for p in d.get("canonical_poses", [])]
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise FormatError(path, f"invalid pose file: {exc!r}") from None
    return out


# -- visibility matrix --------------------------------------------------------------

_VM_MAGIC = "SPVM1"


def write_vismatrix(path, vm) -> None:
    header = dict(vm.header)
    header["rows"], header["cols"] = int(vm.counts.shape[0]), int(vm.counts.shape[1])
    header["columns"] = [list(c) for c in vm.columns]
    line = _VM_MAGIC + " " + json.dumps(header, sort_keys=True) + "\n"
    body = np.ascontiguousarray(vm.counts, dtype="<u4").tobytes()
    atomic_write(path, line.encode() + body)


def read_vismatrix(path):
    from .ipopt import VisibilityMatrix
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0 or not raw.startswith(_VM_MAGIC.encode()):
        raise FormatError(path, "not a visibility-matrix file", 1)
    try:
        header = json.loads(raw[len(_VM_MAGIC) + 1:nl].decode())
    except json.JSONDecodeError as exc:
        raise FormatError(path, f"bad header: {exc.msg}", 1) from None
    rows, cols = header["rows"], header["cols"]
    body = raw[nl + 1:]
    if len(body) != 4 * rows * cols:
        raise FormatError(path, f"expected {4 * rows * cols} payload bytes, found {len(body)}")
    counts = np.frombuffer(body, dtype="<u4").reshape(rows, cols).astype(np.uint32)
    return VisibilityMatrix(counts, [tuple(c) for c in header["columns"]], header)


# -- point clouds and buffers -------------------------------------------------------

def write_ply(path, cloud: PointCloud) -> None:
    lines = ["ply", "format ascii 1.0", f"element vertex {len(cloud)}", "property float x", "property float y",
             "property float z", "property int object_id", "property int sensor_id", "end_header"]
    for (x, y, z), o, s in zip(cloud.points, cloud.object_ids, cloud.sensor_ids):
        lines.append(f"{x:.6f} {y:.6f} {z:.6f} {int(o)} {int(s)}")
    atomic_write(path, "\n".join(lines) + "\n")


def read_ply(path) -> PointCloud:
    lines = Path(path).read_text().splitlines()
    end = lines.index("end_header")
    n = int(next(l for l in lines if l.startswith("element vertex")).split()[-1])
    rows = [l.split() for l in lines[end + 1:end + 1 + n]]
    if not rows:
        return PointCloud.empty()
    arr = np.array(rows, dtype=float)
    return PointCloud(arr[:, :3], arr[:, 3].astype(np.int32), arr[:, 4].astype(np.int32))


def dump_buffers(path, db: DepthBuffer, fb: FragmentBuffer) -> None:
    """Header line, then row-major float32 depth and int32 fragment ids (little-endian)."""
    header = f"width={db.width} height={db.height} depth=float32le ids=int32le " \
             f"background_depth=inf background_id={BACKGROUND_ID}\n"
    body = np.ascontiguousarray(db.depth, dtype="<f4").tobytes() + np.ascontiguousarray(fb.ids, dtype="<i4").tobytes()
    atomic_write(path, header.encode() + body)


def load_buffers(path) -> tuple[DepthBuffer, FragmentBuffer]:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    fields = dict(kv.split("=") for kv in raw[:nl].decode().split())
    w, h = int(fields["width"]), int(fields["height"])
    body = raw[nl + 1:]
    depth = np.frombuffer(body[:4 * w * h], dtype="<f4").reshape(h, w).astype(float)
    ids = np.frombuffer(body[4 * w * h:], dtype="<i4").reshape(h, w).astype(np.int32)
    return DepthBuffer(depth), FragmentBuffer(ids)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    out = [",".join(header)]
    for r in rows:
        out.append(",".join(_fmt(x) for x in r))
    atomic_write(path, "\n".join(out) + "\n")


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.6g}"
    return str(x)
