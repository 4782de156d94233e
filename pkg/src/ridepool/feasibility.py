"""Ride-share feasibility: can a vehicle already carrying a passenger pick up
a second request and still honor both trip deadlines?

For a vehicle on trip (s, d) that has already spent `elapsed` slots and sits
in region v facing a request v -> u, two candidate plans are checked, each
with every leg on a fastest region path:

* new rider first:  v -> u -> d
* on-board first:   v -> d -> u

The indicator z is 1 iff at least one plan delivers the new rider within its
deadline and finishes the on-board trip within its remaining budget. z values
and witnessing plans are precomputed per trip for O(1) lookup.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .region_graph import RegionGraph


def deadline(v: int, u: int, alpha: float, graph: RegionGraph) -> int | None:
    """Trip deadline in slots: ceil(alpha * fastest time). None if unreachable."""
    if alpha < 1:
        raise InputError(f"delay tolerance factor must be >= 1, got {alpha}")
    t = graph.fastest[v, u]
    if not math.isfinite(t):
        return None
    return math.ceil(round(alpha * t, 9))


@dataclass(frozen=True)
class TripSpec:
    """One passenger trip as the optimizer sees it: endpoints plus total slot budget."""

    origin: int
    dest: int
    deadline: int


@dataclass(frozen=True)
class RidePlan:
    """Witness for a feasible two-passenger plan, starting at the pickup region.

    ``nodes`` is the full region sequence, ``offsets`` the arrival slot of each
    node relative to pickup. Drop-off indices point into ``nodes``.
    """

    order: str  # "new_first" or "onboard_first"
    nodes: tuple[int, ...]
    offsets: tuple[int, ...]
    new_dropoff_index: int
    onboard_dropoff_index: int

    @property
    def total_slots(self) -> int:
        return self.offsets[-1]


def _leg(graph: RegionGraph, a: int, b: int) -> tuple[list[int], list[int]] | None:
    """Fastest region path a -> b with cumulative arrival offsets, or None."""
    path = graph.fastest_region_path(a, b)
    if path is None:
        return None
    offsets = [0]
    for i in range(1, len(path)):
        d = next(dd for w, dd in graph.out_edges(path[i - 1]) if w == path[i])
        offsets.append(offsets[-1] + d)
    return path, offsets


def _join_legs(first: tuple[list[int], list[int]], second: tuple[list[int], list[int]]) -> tuple[tuple, tuple, int]:
    """Concatenate two legs sharing a middle node; returns (nodes, offsets, mid_index)."""
    nodes1, off1 = first
    nodes2, off2 = second
    mid_index = len(nodes1) - 1
    nodes = list(nodes1) + list(nodes2[1:])
    base = off1[-1]
    offsets = list(off1) + [base + o for o in off2[1:]]
    return tuple(nodes), tuple(offsets), mid_index


def check_plan(
    s: int,
    d: int,
    v: int,
    u: int,
    elapsed: int,
    graph: RegionGraph,
    alpha: float,
    trip_deadline: int | None = None,
) -> tuple[int, RidePlan | None]:
    """Feasibility of picking up a v -> u rider while carrying an s -> d trip.

    `elapsed` is the time already spent on the (s, d) trip, detours included.
    `trip_deadline` overrides the alpha-derived budget of the on-board trip
    (used for self-selected roaming deadlines). Returns (z, plan).
    """
    if trip_deadline is None:
        trip_deadline = deadline(s, d, alpha, graph)
        if trip_deadline is None:
            return 0, None
    if elapsed < 0 or elapsed > trip_deadline:
        return 0, None
    new_deadline = deadline(v, u, alpha, graph)
    if new_deadline is None:
        return 0, None

    leg_vu = _leg(graph, v, u)
    leg_vd = _leg(graph, v, d)

    candidates = []
    if leg_vu is not None:
        t_vu = leg_vu[1][-1]
        leg_ud = _leg(graph, u, d)
        if leg_ud is not None and t_vu <= new_deadline:
            t_total = t_vu + leg_ud[1][-1]
            if elapsed + t_total <= trip_deadline:
                candidates.append(("new_first", t_total, leg_vu, leg_ud))
    if leg_vd is not None:
        t_vd = leg_vd[1][-1]
        leg_du = _leg(graph, d, u)
        if leg_du is not None and elapsed + t_vd <= trip_deadline:
            t_total = t_vd + leg_du[1][-1]
            if t_total <= new_deadline:
                candidates.append(("onboard_first", t_total, leg_vd, leg_du))

    if not candidates:
        return 0, None
    # smaller total travel time wins; tie delivers the on-board passenger first
    candidates.sort(key=lambda c: (c[1], c[0] == "new_first"))
    order, _t, first, second = candidates[0]
    nodes, offsets, mid = _join_legs(first, second)
    last = len(nodes) - 1
    if order == "new_first":
        plan = RidePlan(order, nodes, offsets, new_dropoff_index=mid, onboard_dropoff_index=last)
    else:
        plan = RidePlan(order, nodes, offsets, new_dropoff_index=last, onboard_dropoff_index=mid)
    return 1, plan


class FeasibilityTable:
    """Precomputed z indicators and plans, keyed by trip spec."""

    def __init__(self, graph_hash: str, alpha: float):
        self.graph_hash = graph_hash
        self.alpha = alpha
        self._z: dict[TripSpec, np.ndarray] = {}
        self._plans: dict[tuple[TripSpec, int, int, int], RidePlan] = {}

    def trips(self) -> list[TripSpec]:
        return sorted(self._z, key=lambda t: (t.origin, t.dest, t.deadline))

    def has_trip(self, trip: TripSpec) -> bool:
        return trip in self._z

    def z(self, trip: TripSpec, elapsed: int, v: int, u: int) -> int:
        table = self._z.get(trip)
        if table is None or not 0 <= elapsed < table.shape[0]:
            return 0
        return int(table[elapsed, v, u])

    def plan(self, trip: TripSpec, elapsed: int, v: int, u: int) -> RidePlan | None:
        return self._plans.get((trip, elapsed, v, u))

    def add_trip(self, trip: TripSpec, graph: RegionGraph) -> None:
        if trip in self._z:
            return
        n = graph.n
        table = np.zeros((trip.deadline + 1, n, n), dtype=np.int8)
        for elapsed in range(trip.deadline + 1):
            for v in range(n):
                for u in range(n):
                    if v == u:
                        continue
                    z, plan = check_plan(
                        trip.origin, trip.dest, v, u, elapsed, graph, self.alpha,
                        trip_deadline=trip.deadline,
                    )
                    if z:
                        table[elapsed, v, u] = 1
                        self._plans[(trip, elapsed, v, u)] = plan
        self._z[trip] = table

    def to_json_dict(self) -> dict:
        entries = []
        for trip in self.trips():
            table = self._z[trip]
            ones = [[int(e), int(v), int(u)] for e, v, u in zip(*np.nonzero(table))]
            plans = []
            for (tr, e, v, u), plan in sorted(
                self._plans.items(), key=lambda kv: (kv[0][0].origin, kv[0][0].dest, kv[0][0].deadline, kv[0][1:])
            ):
                if tr == trip:
                    plans.append(
                        {
                            "elapsed": e,
                            "v": v,
                            "u": u,
                            "order": plan.order,
                            "nodes": list(plan.nodes),
                            "offsets": list(plan.offsets),
                            "new_dropoff_index": plan.new_dropoff_index,
                            "onboard_dropoff_index": plan.onboard_dropoff_index,
                        }
                    )
            entries.append(
                {
                    "trip": [trip.origin, trip.dest, trip.deadline],
                    "shape": list(table.shape),
                    "ones": ones,
                    "plans": plans,
                }
            )
        return {"graph_hash": self.graph_hash, "alpha": self.alpha, "entries": entries}

    @classmethod
    def from_json_dict(cls, data: dict) -> "FeasibilityTable":
        table = cls(data["graph_hash"], data["alpha"])
        for entry in data["entries"]:
            trip = TripSpec(*entry["trip"])
            z = np.zeros(tuple(entry["shape"]), dtype=np.int8)
            for e, v, u in entry["ones"]:
                z[e, v, u] = 1
            table._z[trip] = z
            for p in entry["plans"]:
                table._plans[(trip, p["elapsed"], p["v"], p["u"])] = RidePlan(
                    p["order"], tuple(p["nodes"]), tuple(p["offsets"]),
                    p["new_dropoff_index"], p["onboard_dropoff_index"],
                )
        return table

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")

    @classmethod
    def load(cls, path: str, graph_hash: str | None = None, alpha: float | None = None) -> "FeasibilityTable":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if graph_hash is not None and data["graph_hash"] != graph_hash:
            raise InputError("feasibility cache was built for a different region graph")
        if alpha is not None and data["alpha"] != alpha:
            raise InputError("feasibility cache was built for a different alpha")
        return cls.from_json_dict(data)


def vehicles_hash(trips: list[TripSpec]) -> str:
    blob = json.dumps([[t.origin, t.dest, t.deadline] for t in sorted(
        trips, key=lambda t: (t.origin, t.dest, t.deadline))], separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def precompute(
    graph: RegionGraph,
    alpha: float,
    vehicles: list[tuple[int, int] | TripSpec],
) -> FeasibilityTable:
    """Build the z table for every given vehicle trip.

    Vehicles may be (origin, dest) pairs, whose deadlines derive from alpha,
    or explicit TripSpec values with self-selected budgets.
    """
    table = FeasibilityTable(graph.content_hash(), alpha)
    for veh in vehicles:
        if isinstance(veh, TripSpec):
            trip = veh
        else:
            s, d = veh
            dl = deadline(s, d, alpha, graph)
            if dl is None:
                raise InputError(f"vehicle trip ({s}, {d}) has no finite deadline")
            trip = TripSpec(s, d, dl)
        table.add_trip(trip, graph)
    return table
