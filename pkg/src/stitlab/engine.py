"""Spatio-temporal construction of a STIT tessellation inside a window.

Cells carry independent exponential lifetimes with rate proportional to
their plane-hitting weight (window normalized to rate one).  When a cell
dies it is divided by a plane drawn from the hitting distribution, the
cell-separating polygon is logged with full provenance, and both children
get fresh lifetimes.  A priority queue drives the process to the fixed
time horizon, so the event order is exactly the randomness.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .geometry import (ConvexPolytope, NearVertexPlane, Plane,
                       PlaneMissesInterior, SourceTag, TolerancePolicy,
                       split_polytope)
from .directions import DirectionalDistribution, hitting_weight, sample_hitting_plane


class ConstructionCapExceeded(Exception):
    """Cell count crossed the configured complexity guard."""


@dataclass
class SideRecord:
    """One side of a cell-separating polygon: endpoints plus the facet
    provenance of the parent-cell facet containing it."""

    a: np.ndarray
    b: np.ndarray
    carrier: SourceTag


@dataclass
class IPolygonRecord:
    """Cell-separating polygon born at one division event."""

    id: int
    plane: Plane
    birth_time: float
    loop: np.ndarray            # (k, 3), oriented along plane normal
    sides: list[SideRecord]
    parent_cell: int

    def centroid(self) -> np.ndarray:
        return self.loop.mean(axis=0)


@dataclass
class ConstructionResult:
    window: ConvexPolytope
    window_side: float
    final_cells: list[ConvexPolytope]
    polygons: list[IPolygonRecord]
    t: float
    seed: int
    stream: int
    direction_name: str
    policy: TolerancePolicy
    n_events: int = 0


def construction_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for (master seed, replicate index) pairs."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream,))
    return np.random.Generator(np.random.Philox(ss))


def run_construction(window: ConvexPolytope, dist: DirectionalDistribution,
                     t: float, seed: int, stream: int = 0,
                     cell_cap: int = 1_000_000,
                     policy: TolerancePolicy | None = None,
                     window_side: float | None = None) -> ConstructionResult:
    """Run the division process in ``window`` up to time ``t``.

    Deterministic in (seed, stream, t, window, dist): repeated runs produce
    bit-identical results.  Raises :class:`ConstructionCapExceeded` when the
    number of cells would cross ``cell_cap``.
    """
    if t < 0:
        raise ValueError("time horizon must be nonnegative")
    if window_side is None:
        window_side = float(window.vertices.max())
    policy = policy or TolerancePolicy.for_window(window_side)
    rng = construction_rng(seed, stream)

    base_weight = hitting_weight(window, dist)
    cells: dict[int, ConvexPolytope] = {0: window}
    next_cell_id = 1
    heap: list[tuple[float, int]] = []
    first_death = rng.exponential(1.0)  # window has rate one by normalization
    if t > 0:
        heapq.heappush(heap, (first_death, 0))
    polygons: list[IPolygonRecord] = []
    n_events = 0

    while heap and heap[0][0] <= t:
        death_time, cell_id = heapq.heappop(heap)
        poly = cells.pop(cell_id)
        plus = minus = None
        for _ in range(10_000):
            plane = sample_hitting_plane(poly, dist, rng)
            try:
                plus, minus, loop, carriers = split_polytope(
                    poly, plane, SourceTag("polygon", len(polygons)),
                    policy.merge_eps,
                )
                break
            except (NearVertexPlane, PlaneMissesInterior):
                continue
        else:
            raise RuntimeError("could not place a splitting plane")

        sides = [
            SideRecord(a=loop[i], b=loop[(i + 1) % len(loop)], carrier=carriers[i])
            for i in range(len(loop))
        ]
        polygons.append(IPolygonRecord(
            id=len(polygons), plane=plane, birth_time=death_time,
            loop=loop, sides=sides, parent_cell=cell_id,
        ))
        n_events += 1

        for child in (plus, minus):
            rate = hitting_weight(child, dist) / base_weight
            child_death = death_time + rng.exponential(1.0 / rate)
            cells[next_cell_id] = child
            if child_death <= t:
                heapq.heappush(heap, (child_death, next_cell_id))
            next_cell_id += 1
            if next_cell_id - len(polygons) > cell_cap:
                raise ConstructionCapExceeded(
                    f"cell count exceeded cap {cell_cap}"
                )

    return ConstructionResult(
        window=window, window_side=window_side,
        final_cells=[cells[k] for k in sorted(cells)],
        polygons=polygons, t=t, seed=seed, stream=stream,
        direction_name=dist.name, policy=policy, n_events=n_events,
    )


def calibrate_time(window: ConvexPolytope, dist: DirectionalDistribution,
                   target_cells: int, seed: int, pilots: int = 5,
                   tolerance: float = 0.2, cell_cap: int = 1_000_000) -> float:
    """Time horizon whose mean final cell count over pilot runs is within
    ``tolerance`` of ``target_cells``.

    The cell count grows like t^3, which gives the initial guess; bisection
    afterwards.  Pilot streams are derived from ``seed`` and disjoint from
    replicate streams by construction (large stream offsets).
    """
    if target_cells < 1:
        raise ValueError("target_cells must be at least 1")
    if target_cells == 1:
        return 0.0

    def mean_cells(t: float) -> float:
        counts = []
        for k in range(pilots):
            res = run_construction(window, dist, t, seed,
                                   stream=1_000_000 + k, cell_cap=cell_cap)
            counts.append(len(res.final_cells))
        return float(np.mean(counts))

    t = 1.0
    count = mean_cells(t)
    for _ in range(20):
        if abs(count - target_cells) <= tolerance * target_cells:
            return t
        t *= (target_cells / count) ** (1.0 / 3.0)
        count = mean_cells(t)
    # bracket and bisect as a fallback
    lo, hi = t / 2.0, t * 2.0
    while mean_cells(lo) > target_cells:
        lo /= 2.0
    while mean_cells(hi) < target_cells:
        hi *= 2.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        count = mean_cells(mid)
        if abs(count - target_cells) <= tolerance * target_cells:
            return mid
        if count < target_cells:
            lo = mid
        else:
            hi = mid
    raise RuntimeError("time calibration failed to converge")
