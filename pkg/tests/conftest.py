import math
import sys

import numpy as np
import pytest

from sensorpose.camera import Intrinsics
from sensorpose.scene import (CanonicalPose, Environment, Frame, GroundRect, ObjectBox, RailPose, Scenario,
                              VirtualRail)


@pytest.fixture
def intr():
    return Intrinsics()


def random_box(rng, box_id, spread=8.0, ground_y=0.0):
    w, h, l = rng.uniform(0.8, 2.5), rng.uniform(0.8, 3.0), rng.uniform(1.0, 5.0)
    x, z = rng.uniform(-spread, spread, size=2)
    return ObjectBox(box_id, (x, ground_y + 0.5 * h, z), (w, h, l), rng.uniform(0, 2 * math.pi))


def random_scene(rng, n_objects=3, n_env=1, with_ground=True, spread=8.0):
    env_boxes = tuple(random_box(rng, k, spread) for k in range(n_env))
    ground = GroundRect(-30, 30, -30, 30, 0.0) if with_ground else None
    frame = Frame(0, tuple(random_box(rng, k, spread) for k in range(n_objects)))
    return Environment(env_boxes, ground), frame


def looking_pose(rng, target=(0.0, 0.0, 0.0), radius=(14.0, 22.0), height=(3.0, 8.0), jitter=0.25):
    """A pose on a ring around ``target`` roughly aimed at it."""
    ang = rng.uniform(0, 2 * math.pi)
    r = rng.uniform(*radius)
    pos = np.array([target[0] + r * math.sin(ang), rng.uniform(*height), target[2] + r * math.cos(ang)])
    v = np.asarray(target) - pos
    yaw = (math.atan2(v[0], v[2]) + rng.uniform(-jitter, jitter)) % (2 * math.pi)
    pitch = min(max(math.acos(-v[1] / np.linalg.norm(v)) + rng.uniform(-jitter, jitter), 0.05), math.pi - 0.05)
    return CanonicalPose(pos, yaw, pitch)


def ring_rails(radius=18.0, height=5.0, count=4):
    rails = []
    for k in range(count):
        a0 = 2 * math.pi * k / count
        a1 = a0 + 0.6 * 2 * math.pi / count
        rails.append(VirtualRail((radius * math.sin(a0), height, radius * math.cos(a0)),
                                 (radius * math.sin(a1), height, radius * math.cos(a1))))
    return tuple(rails)


@pytest.fixture
def small_scenario():
    rng = np.random.default_rng(11)
    env, frame = random_scene(rng, n_objects=3, n_env=1)
    frame2 = Frame(1, tuple(random_box(rng, k) for k in range(2)))
    return Scenario(env, ring_rails(), (frame, frame2), focus_point=(0.0, 0.0, 0.0))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
