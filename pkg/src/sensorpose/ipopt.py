"""Integer-programming pipeline: candidate grid, visibility matrix and max-min solvers."""
from __future__ import annotations

import hashlib
import itertools
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .camera import Intrinsics
from .raster import render_frame
from .scene import CanonicalPose, Scenario, VirtualRail

DEFAULT_PITCHES_DEG = (18.0, 36.0, 54.0)
MCMC_EPS = 1e-9


@dataclass(frozen=True)
class Candidate:
    pose: CanonicalPose
    rail_index: int
    fraction: float
    yaw_index: int
    pitch_index: int


@dataclass(frozen=True)
class CandidateGrid:
    candidates: tuple[Candidate, ...]

    def __len__(self) -> int:
        return len(self.candidates)

    @property
    def poses(self) -> list[CanonicalPose]:
        return [c.pose for c in self.candidates]

    def provenance(self) -> list[dict]:
        return [{"rail": c.rail_index, "fraction": c.fraction, "yaw_index": c.yaw_index,
                 "pitch_index": c.pitch_index, "position": list(c.pose.position), "yaw": c.pose.yaw,
                 "pitch": c.pose.pitch} for c in self.candidates]


def build_candidates(rails: Sequence[VirtualRail], positions: int = 10, yaws: int = 10,
                     pitches: int | Sequence[float] = 3) -> CandidateGrid:
    """Positions at fractions k/positions (k = 1..positions) along each rail,
    yaws 360 k/yaws degrees, and pitches 18 k degrees (or explicit degrees)."""
    if isinstance(pitches, int):
        if pitches < 1:
            raise ValueError("pitches must be >= 1")
        pitch_deg = [18.0 * (k + 1) for k in range(pitches)]
    else:
        pitch_deg = [float(p) for p in pitches]
        if not pitch_deg:
            raise ValueError("need at least one pitch")
    if positions < 1 or yaws < 1:
        raise ValueError("positions and yaws must be >= 1")
    out = []
    for r, rail in enumerate(rails):
        for i in range(positions):
            frac = (i + 1) / positions
            pos = rail.p2 if i == positions - 1 else tuple(rail.point_at(frac))
            for j in range(yaws):
                yaw = 2 * math.pi * (j + 1) / yaws
                for k, p in enumerate(pitch_deg):
                    out.append(Candidate(CanonicalPose(pos, yaw, math.radians(p)), r, frac, j, k))
    return CandidateGrid(tuple(out))


def scenario_hash(scenario: Scenario) -> str:
    from .formats import scenario_to_dict
    blob = json.dumps(scenario_to_dict(scenario), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class VisibilityMatrix:
    counts: np.ndarray  # (candidates, objects), integer
    columns: list[tuple[int, int]]  # column -> (frame id, object id)
    header: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape


def _candidate_row(pose: CanonicalPose, scenario: Scenario, intr: Intrinsics) -> np.ndarray:
    row = []
    for frame in scenario.frames:
        _, fb = render_frame(frame, scenario.environment, pose, intr)
        ids = fb.ids[fb.ids >= 0]
        hist = np.bincount(ids, minlength=max(o.id for o in frame.objects) + 1) if ids.size else None
        for o in frame.objects:
            row.append(0 if hist is None or o.id >= len(hist) else int(hist[o.id]))
    return np.array(row, dtype=np.uint32)


def build_vismatrix(grid: CandidateGrid, scenario: Scenario, intr: Intrinsics = Intrinsics(),
                    checkpoint: Optional[os.PathLike] = None, checkpoint_every: int = 10,
                    threads: int = 1) -> VisibilityMatrix:
    """Single-candidate pixel counts for every (frame, object) column.

    With ``checkpoint`` set, finished rows are flushed to that file every
    ``checkpoint_every`` candidates and reused on restart if the scenario hash
    and grid size match.
    """
    from .formats import read_vismatrix, write_vismatrix
    columns = [(f.id, o.id) for f in scenario.frames for o in f.objects]
    header = {"candidates": grid.provenance(), "columns": [list(c) for c in columns],
              "width": intr.width, "height": intr.height, "hfov": intr.hfov, "near": intr.near,
              "far": intr.far, "scenario_hash": scenario_hash(scenario)}
    counts = np.zeros((len(grid), len(columns)), dtype=np.uint32)
    done = np.zeros(len(grid), dtype=bool)
    if checkpoint is not None and Path(checkpoint).exists():
        old = read_vismatrix(checkpoint)
        if (old.header.get("scenario_hash") == header["scenario_hash"]
                and old.counts.shape == counts.shape and old.header.get("candidates") == header["candidates"]):
            done[:] = np.asarray(old.header.get("completed", [False] * len(grid)), dtype=bool)
            counts[done] = old.counts[done]

    todo = [i for i in range(len(grid)) if not done[i]]

    def row(i):
        return _candidate_row(grid.candidates[i].pose, scenario, intr)

    def flush():
        if checkpoint is not None:
            write_vismatrix(checkpoint, VisibilityMatrix(counts, columns, {**header, "completed": done.tolist()}))

    chunk = max(1, checkpoint_every)
    for start in range(0, len(todo), chunk):
        batch = todo[start:start + chunk]
        if threads > 1:
            from concurrent.futures import ThreadPoolExecutor
            with ThreadPoolExecutor(threads) as pool:
                rows = list(pool.map(row, batch))
        else:
            rows = [row(i) for i in batch]
        for i, r in zip(batch, rows):
            counts[i] = r
            done[i] = True
        flush()
    return VisibilityMatrix(counts, columns, header)


def ip_objective(V: np.ndarray, chosen) -> int:
    """min over columns of the summed chosen rows (0 for an empty choice)."""
    chosen = list(chosen)
    if not chosen:
        return 0
    return int(np.asarray(V, dtype=np.int64)[chosen].sum(axis=0).min())


@dataclass
class IPSolution:
    chosen: tuple[int, ...]
    z: int
    elapsed: float = 0.0
    iterations: int = 0
    solver: str = ""
    trace: list[int] = field(default_factory=list)  # best z after each iteration (sampling solvers)


@dataclass
class StopCriterion:
    """Stop when ``max_seconds`` pass without improvement or after ``max_iters`` iterations."""

    max_seconds: float = 60.0
    max_iters: int = 100_000


class BudgetExceeded(RuntimeError):
    pass


def solve_exhaustive(V: np.ndarray, n: int, budget: int = 10_000_000, chunk: int = 65536) -> IPSolution:
    """Globally optimal choice of ``n`` rows by enumeration; first (lexicographic) optimum wins."""
    V = np.asarray(V, dtype=np.int64)
    rows = V.shape[0]
    t0 = time.perf_counter()
    if n >= rows:
        chosen = tuple(range(rows))
        return IPSolution(chosen, ip_objective(V, chosen), time.perf_counter() - t0, 1, "exhaustive")
    if n < 1:
        return IPSolution((), 0, 0.0, 0, "exhaustive")
    total = math.comb(rows, n)
    if total > budget:
        raise BudgetExceeded(f"C({rows}, {n}) = {total} combinations exceeds the budget of {budget}; "
                             "use the naive or mcmc solver")
    best_z, best = -1, None
    combos = itertools.combinations(range(rows), n)
    while True:
        block = np.fromiter(itertools.chain.from_iterable(itertools.islice(combos, chunk)), dtype=np.int64)
        if block.size == 0:
            break
        block = block.reshape(-1, n)
        z = V[block].sum(axis=1).min(axis=1)
        k = int(np.argmax(z))
        if z[k] > best_z:
            best_z, best = int(z[k]), tuple(int(i) for i in block[k])
    return IPSolution(best, best_z, time.perf_counter() - t0, total, "exhaustive")


def _clock():
    return time.monotonic()


def solve_naive(V: np.ndarray, n: int, stop: StopCriterion = StopCriterion(), rng_seed: int = 0) -> IPSolution:
    """Uniform random subsets of size ``n``; a tie with the best refreshes the timer."""
    V = np.asarray(V, dtype=np.int64)
    rows = V.shape[0]
    if n > rows:
        raise ValueError("n exceeds the number of candidates")
    rng = np.random.default_rng(rng_seed)
    t0 = last = _clock()
    best_z, best = 0, ()
    it = 0
    trace = []
    while it < stop.max_iters and _clock() - last <= stop.max_seconds:
        s = tuple(sorted(int(i) for i in rng.choice(rows, size=n, replace=False)))
        z = int(V[list(s)].sum(axis=0).min())
        it += 1
        if z >= best_z:
            best_z, best = z, s
            last = _clock()
        trace.append(best_z)
    return IPSolution(best, best_z, _clock() - t0, it, "naive", trace)


def solve_mcmc(V: np.ndarray, n: int, stop: StopCriterion = StopCriterion(), rng_seed: int = 0,
               eps: float = MCMC_EPS) -> IPSolution:
    """Metropolis-Hastings over size-``n`` subsets with single-swap proposals.

    A proposal with score z* replacing a state with score z is accepted with
    probability min(1, z* / (z + eps)); the best state ever visited is returned.
    """
    V = np.asarray(V, dtype=np.int64)
    rows = V.shape[0]
    if n >= rows:
        raise ValueError("mcmc needs n < number of candidates")
    rng = np.random.default_rng(rng_seed)
    t0 = last = _clock()
    current = [int(i) for i in rng.choice(rows, size=n, replace=False)]
    sums = V[current].sum(axis=0)
    z = int(sums.min())
    best_z, best = z, tuple(sorted(current))
    it = 0
    trace = []
    while it < stop.max_iters and _clock() - last <= stop.max_seconds:
        it += 1
        slot = int(rng.integers(n))
        outside = np.setdiff1d(np.arange(rows), current, assume_unique=True)
        new = int(outside[rng.integers(len(outside))])
        prop_sums = sums - V[current[slot]] + V[new]
        z_star = int(prop_sums.min())
        r = z_star / (z + eps)
        if rng.random() <= min(1.0, r):
            current[slot] = new
            sums, z = prop_sums, z_star
            if z >= best_z:
                best_z, best = z, tuple(sorted(current))
                last = _clock()
        trace.append(best_z)
    return IPSolution(best, best_z, _clock() - t0, it, "mcmc", trace)


SOLVERS = {"exhaustive": solve_exhaustive, "naive": solve_naive, "mcmc": solve_mcmc}
