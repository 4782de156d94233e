"""Road network ingestion, grid partitioning, and the region-level graph.

The region graph carries two travel-time notions, both in whole slots:

* ``fastest[u, v]`` -- fastest time between region representatives measured
  on the underlying road network (used for trip deadlines and the detour
  rule that prunes region edges),
* ``graph_time(u, v)`` -- fastest time along region-graph edges themselves
  (what a vehicle moving region to region actually incurs).
"""

from __future__ import annotations

import csv
import hashlib
import heapq
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

INF = math.inf


def travel_time_slots(distance_km: float, speed_kmh: float, slot_minutes: int) -> int:
    """Travel time of a road segment: minutes rounded up, then whole slots."""
    if distance_km <= 0:
        raise InputError(f"distance must be positive, got {distance_km}")
    if speed_kmh <= 0:
        raise InputError(f"speed must be positive, got {speed_kmh}")
    if slot_minutes <= 0:
        raise InputError(f"slot length must be positive, got {slot_minutes}")
    minutes = math.ceil(round(60.0 * distance_km / speed_kmh, 9))
    return math.ceil(round(minutes / slot_minutes, 9))


@dataclass(frozen=True)
class RoadNode:
    id: int
    x_km: float
    y_km: float


@dataclass(frozen=True)
class RoadEdge:
    u: int
    v: int
    distance_km: float


@dataclass
class RoadNetwork:
    nodes: list[RoadNode]
    edges: list[RoadEdge]

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise InputError("road node ids must be unique")
        known = set(ids)
        for e in self.edges:
            if e.u == e.v:
                raise InputError(f"self-loop edge on node {e.u}")
            if e.distance_km < 0:
                raise InputError(f"negative distance on edge ({e.u}, {e.v})")
            if e.u not in known or e.v not in known:
                raise InputError(f"edge ({e.u}, {e.v}) references unknown node")
        self._by_id = {n.id: n for n in self.nodes}

    def node(self, node_id: int) -> RoadNode:
        return self._by_id[node_id]

    def adjacency_slots(self, speed_kmh: float, slot_minutes: int) -> dict[int, list[tuple[int, int]]]:
        """Out-adjacency with edge weights converted to slots."""
        adj: dict[int, list[tuple[int, int]]] = {n.id: [] for n in self.nodes}
        for e in self.edges:
            w = travel_time_slots(e.distance_km, speed_kmh, slot_minutes) if e.distance_km > 0 else 0
            adj[e.u].append((e.v, w))
        for lst in adj.values():
            lst.sort()
        return adj


def _dijkstra(adj: dict[int, list[tuple[int, int]]], source: int) -> dict[int, int]:
    dist = {source: 0}
    heap = [(0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist.get(u, INF):
            continue
        for v, w in adj[u]:
            nd = d + w
            if nd < dist.get(v, INF):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


@dataclass(frozen=True)
class Region:
    index: int
    representative: int
    centroid: tuple[float, float]
    members: tuple[int, ...]


@dataclass
class RegionGraph:
    regions: list[Region]
    edges: list[tuple[int, int, int]]  # (u, v, delta_slots), delta >= 1
    fastest: np.ndarray  # (n, n) road-network fastest times in slots, inf if unreachable

    def __post_init__(self):
        n = len(self.regions)
        self.fastest = np.asarray(self.fastest, dtype=float)
        if self.fastest.shape != (n, n):
            raise InputError("fastest-time matrix shape does not match region count")
        self._out: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        for u, v, d in self.edges:
            if u == v or d < 1:
                raise InputError(f"bad region edge ({u}, {v}, {d})")
            self._out[u].append((v, d))
        for lst in self._out:
            lst.sort()
        self._graph_dist: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.regions)

    def out_edges(self, u: int) -> list[tuple[int, int]]:
        return self._out[u]

    def _compute_graph_distances(self) -> np.ndarray:
        n = self.n
        dist = np.full((n, n), INF)
        for s in range(n):
            adj = {u: self._out[u] for u in range(n)}
            d = _dijkstra(adj, s)
            for v, dv in d.items():
                dist[s, v] = dv
        return dist

    def graph_time(self, u: int, v: int) -> float:
        """Fastest travel time from u to v along region-graph edges (slots)."""
        if self._graph_dist is None:
            self._graph_dist = self._compute_graph_distances()
        return float(self._graph_dist[u, v])

    def graph_times(self) -> np.ndarray:
        if self._graph_dist is None:
            self._graph_dist = self._compute_graph_distances()
        return self._graph_dist

    def fastest_region_path(self, u: int, v: int) -> list[int] | None:
        """Node sequence of the fastest region path u -> v, smallest ids on ties."""
        dist = self.graph_times()
        if not math.isfinite(dist[u, v]):
            return None
        path = [u]
        cur = u
        while cur != v:
            nxt = None
            for w, d in self._out[cur]:  # ascending w: first hit is smallest id
                if d + dist[w, v] == dist[cur, v]:
                    nxt = w
                    break
            if nxt is None:
                return None
            path.append(nxt)
            cur = nxt
        return path

    def to_json_dict(self) -> dict:
        fastest = [[None if not math.isfinite(x) else int(x) for x in row] for row in self.fastest]
        return {
            "regions": [
                {
                    "index": r.index,
                    "representative": r.representative,
                    "centroid": list(r.centroid),
                    "members": list(r.members),
                }
                for r in self.regions
            ],
            "edges": [[u, v, d] for u, v, d in self.edges],
            "fastest": fastest,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "RegionGraph":
        regions = [
            Region(r["index"], r["representative"], tuple(r["centroid"]), tuple(r["members"]))
            for r in data["regions"]
        ]
        edges = [tuple(e) for e in data["edges"]]
        n = len(regions)
        fastest = np.full((n, n), INF)
        for i, row in enumerate(data["fastest"]):
            for j, x in enumerate(row):
                if x is not None:
                    fastest[i, j] = x
        return cls(regions, edges, fastest)

    def content_hash(self) -> str:
        blob = json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def partition_grid(network: RoadNetwork, cell_width_km: float, cell_height_km: float) -> list[Region]:
    """Partition road nodes into equal rectangular cells; empty cells are dropped.

    Each nonempty cell becomes a region whose representative is the road node
    nearest the cell centroid (lowest id on ties). Regions are numbered in
    row-major cell order.
    """
    if not network.nodes:
        raise InputError("cannot partition an empty road network")
    if cell_width_km <= 0 or cell_height_km <= 0:
        raise InputError("cell dimensions must be positive")
    xs = [n.x_km for n in network.nodes]
    ys = [n.y_km for n in network.nodes]
    min_x, min_y = min(xs), min(ys)
    n_cols = max(1, math.ceil(round((max(xs) - min_x) / cell_width_km, 9)))
    n_rows = max(1, math.ceil(round((max(ys) - min_y) / cell_height_km, 9)))

    cells: dict[tuple[int, int], list[RoadNode]] = {}
    for node in network.nodes:
        col = min(n_cols - 1, int((node.x_km - min_x) / cell_width_km))
        row = min(n_rows - 1, int((node.y_km - min_y) / cell_height_km))
        cells.setdefault((row, col), []).append(node)

    regions = []
    for row, col in sorted(cells):
        members = cells[(row, col)]
        cx = min_x + (col + 0.5) * cell_width_km
        cy = min_y + (row + 0.5) * cell_height_km
        rep = min(members, key=lambda nd: ((nd.x_km - cx) ** 2 + (nd.y_km - cy) ** 2, nd.id))
        regions.append(
            Region(
                index=len(regions),
                representative=rep.id,
                centroid=(cx, cy),
                members=tuple(sorted(nd.id for nd in members)),
            )
        )
    return regions


def build_region_graph(
    network: RoadNetwork,
    regions: list[Region],
    eta: float,
    speed_kmh: float = 15.0,
    slot_minutes: int = 5,
) -> RegionGraph:
    """Build the region graph: fastest times between representatives plus the
    detour-pruned edge set.

    A directed edge (u, v) is kept iff T(u,v) <= eta * (T(u,k) + T(k,v)) for
    every other region k with both legs finite, i.e. no intermediate region
    offers a comparable two-hop alternative. Edge travel time delta equals
    T(u, v).
    """
    if not 0 < eta <= 1:
        raise InputError(f"eta must lie in (0, 1], got {eta}")
    if not regions:
        raise InputError("no regions given")
    n = len(regions)
    adj = network.adjacency_slots(speed_kmh, slot_minutes)
    reps = [r.representative for r in regions]
    fastest = np.full((n, n), INF)
    for i, rep in enumerate(reps):
        dist = _dijkstra(adj, rep)
        for j, other in enumerate(reps):
            if other in dist:
                fastest[i, j] = dist[other]
    np.fill_diagonal(fastest, 0.0)

    for i in range(n):
        for j in range(n):
            if i != j and fastest[i, j] == 0:
                raise InputError(
                    f"regions {i} and {j} have zero travel time between representatives; "
                    "partition is degenerate"
                )

    edges = []
    for u in range(n):
        # cand[k, v] = T(u,k) + T(k,v); exclude k == u (row) and k == v (diagonal)
        cand = fastest[u][:, None] + fastest
        cand[u, :] = INF
        cand[np.arange(n), np.arange(n)] = INF
        best_via = cand.min(axis=0)
        for v in range(n):
            if u == v or not math.isfinite(fastest[u, v]):
                continue
            if fastest[u, v] <= eta * best_via[v]:
                edges.append((u, v, int(fastest[u, v])))

    return RegionGraph(regions, edges, fastest)


def region_span_report(
    network: RoadNetwork,
    regions: list[Region],
    speed_kmh: float = 15.0,
    slot_minutes: int = 5,
) -> dict[int, int | None]:
    """Diagnostic: per region, the worst-case slots from the representative to
    any member node (None if some member is unreachable). Not enforced."""
    adj = network.adjacency_slots(speed_kmh, slot_minutes)
    report: dict[int, int | None] = {}
    for r in regions:
        dist = _dijkstra(adj, r.representative)
        worst = 0
        for m in r.members:
            if m not in dist:
                worst = None
                break
            worst = max(worst, dist[m])
        report[r.index] = worst
    return report


def _read_csv(path: str, required: list[str]) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != required:
            raise InputError(f"{path}: expected header {','.join(required)}")
        return list(reader)


def load_road_network(nodes_csv: str, edges_csv: str) -> RoadNetwork:
    """Read a road network from `nodes.csv` (id,x_km,y_km) and `edges.csv`
    (from_id,to_id,distance_km)."""
    nodes = []
    for i, row in enumerate(_read_csv(nodes_csv, ["id", "x_km", "y_km"]), start=2):
        try:
            nodes.append(RoadNode(int(row["id"]), float(row["x_km"]), float(row["y_km"])))
        except (TypeError, ValueError) as exc:
            raise InputError(f"{nodes_csv}: bad row {i}: {exc}") from exc
    edges = []
    for i, row in enumerate(_read_csv(edges_csv, ["from_id", "to_id", "distance_km"]), start=2):
        try:
            edges.append(RoadEdge(int(row["from_id"]), int(row["to_id"]), float(row["distance_km"])))
        except (TypeError, ValueError) as exc:
            raise InputError(f"{edges_csv}: bad row {i}: {exc}") from exc
    return RoadNetwork(nodes, edges)


def synthetic_region_graph(n: int, edges: list[tuple[int, int, int]]) -> RegionGraph:
    """Region graph built directly from region edges; representative times are
    taken as shortest paths over those edges. Used by fixtures and tests."""
    regions = [Region(index=i, representative=i, centroid=(float(i), 0.0), members=(i,)) for i in range(n)]
    out: dict[int, list[tuple[int, int]]] = {i: [] for i in range(n)}
    for u, v, d in edges:
        out[u].append((v, d))
    fastest = np.full((n, n), INF)
    for s in range(n):
        dist = _dijkstra(out, s)
        for v, dv in dist.items():
            fastest[s, v] = dv
    return RegionGraph(regions, list(edges), fastest)
