"""Bundled T-junction demo scenario (synthetic frames from a versioned generator config)."""
from __future__ import annotations

import json
from importlib import resources

from .formats import generator_config_from_dict, scenario_from_dict
from .scene import Scenario, generate_frames

DEMO_SEED = 7


def demo_config() -> dict:
    return json.loads(resources.files("sensorpose.data").joinpath("demo_config.json").read_text())


def scenario_from_config(cfg: dict, seed: int, n_frames=None) -> Scenario:
    """Generate frames from a generator config and attach its environment and rails."""
    frames = generate_frames(generator_config_from_dict(cfg), seed, n_frames)
    doc = {
        "environment": cfg.get("environment", {}),
        "rails": cfg["rails"],
        "frames": [{"id": f.id, "objects": [{"id": o.id, "center": list(o.center), "size": list(o.size),
                                             "yaw": o.yaw} for o in f.objects]} for f in frames],
    }
    if "focus_point" in cfg:
        doc["focus_point"] = cfg["focus_point"]
    return scenario_from_dict(doc)


def demo_scenario(n_frames=None) -> Scenario:
    return scenario_from_config(demo_config(), DEMO_SEED, n_frames)
