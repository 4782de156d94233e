"""Time-expanded routing graph.

Nodes are (region, slot) pairs for slots 0..tau plus one virtual destination
per vehicle. Region edges go from (u, t) to (v, t + delta) and sink edges
connect the vehicle's destination region at slots 1..deadline to its virtual
destination, so every source-to-sink path honors the trip deadline by
construction. The graph is acyclic: every region edge strictly increases the
slot. Dense node ids are t * n_regions + region, sinks appended.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InputError
from .region_graph import RegionGraph


@dataclass(frozen=True)
class VehicleSpec:
    """Routing view of one vehicle: current region, destination, slot budget."""

    origin: int
    dest: int
    deadline: int


class TimeExpandedGraph:
    def __init__(self, region_graph: RegionGraph, vehicles: list[VehicleSpec], allow_waiting: bool = False):
        self.region_graph = region_graph
        self.vehicles = list(vehicles)
        self.allow_waiting = allow_waiting
        if not vehicles:
            raise InputError("at least one vehicle required")
        for i, veh in enumerate(vehicles):
            if veh.deadline < 1:
                raise InputError(f"vehicle {i}: destination unreachable within its budget")
            t = region_graph.graph_time(veh.origin, veh.dest)
            if not math.isfinite(t) or t > veh.deadline or veh.origin == veh.dest:
                raise InputError(f"vehicle {i}: destination {veh.dest} unreachable from {veh.origin}")
        self.n_regions = region_graph.n
        self.tau = max(v.deadline for v in vehicles)

        n, tau = self.n_regions, self.tau
        self.n_region_nodes = (tau + 1) * n
        self.n_nodes = self.n_region_nodes + len(vehicles)

        # region successors, shared by all vehicles; ascending node id per source
        self._succ: list[list[int]] = [[] for _ in range(self.n_region_nodes)]
        self.n_region_edges = 0
        for t in range(tau + 1):
            for u in range(n):
                src = t * n + u
                for v, delta in region_graph.out_edges(u):
                    if t + delta <= tau:
                        self._succ[src].append((t + delta) * n + v)
                if allow_waiting and t + 1 <= tau:
                    self._succ[src].append((t + 1) * n + u)
                self._succ[src].sort()
                self.n_region_edges += len(self._succ[src])

    def node_id(self, region: int, t: int) -> int:
        return t * self.n_regions + region

    def node_region(self, node: int) -> int:
        return node % self.n_regions

    def node_time(self, node: int) -> int:
        return node // self.n_regions

    def sink_id(self, vehicle: int) -> int:
        return self.n_region_nodes + vehicle

    def is_sink(self, node: int) -> bool:
        return node >= self.n_region_nodes

    def source_id(self, vehicle: int) -> int:
        return self.node_id(self.vehicles[vehicle].origin, 0)

    def region_successors(self, node: int) -> list[int]:
        return self._succ[node]

    def has_sink_edge(self, vehicle: int, node: int) -> bool:
        veh = self.vehicles[vehicle]
        return (
            node < self.n_region_nodes
            and self.node_region(node) == veh.dest
            and 1 <= self.node_time(node) <= veh.deadline
        )

    def successors(self, vehicle: int, node: int) -> list[int]:
        """Region successors plus, where allowed, this vehicle's sink."""
        if self.is_sink(node):
            return []
        out = list(self._succ[node])
        if self.has_sink_edge(vehicle, node):
            out.append(self.sink_id(vehicle))
        return out

    def stats(self) -> dict:
        sink_edges = sum(min(v.deadline, self.tau) for v in self.vehicles)
        return {
            "tau": self.tau,
            "regions": self.n_regions,
            "region_time_nodes": self.n_region_nodes,
            "sinks": len(self.vehicles),
            "region_edges": self.n_region_edges,
            "sink_edges": sink_edges,
        }


def build(region_graph: RegionGraph, vehicles: list[VehicleSpec], allow_waiting: bool = False) -> TimeExpandedGraph:
    return TimeExpandedGraph(region_graph, vehicles, allow_waiting=allow_waiting)


@dataclass(frozen=True)
class RouteIndicator:
    """Node-set form of one vehicle's route, source and sink included."""

    vehicle: int
    active: frozenset[int]


def route_to_indicator(route: list[int], graph: TimeExpandedGraph, vehicle: int) -> RouteIndicator:
    _validate_route(route, graph, vehicle)
    return RouteIndicator(vehicle, frozenset(route))


def indicator_to_route(indicator: RouteIndicator, graph: TimeExpandedGraph) -> list[int]:
    """Reconstruct the unique path: at most one active node per slot layer."""
    vehicle = indicator.vehicle
    sink = graph.sink_id(vehicle)
    if sink not in indicator.active:
        raise InputError("indicator does not reach the vehicle's virtual destination")
    by_layer: dict[int, int] = {}
    for node in indicator.active:
        if node == sink:
            continue
        if graph.is_sink(node):
            raise InputError("indicator contains a foreign virtual destination")
        t = graph.node_time(node)
        if t in by_layer:
            raise InputError(f"two active nodes in slot layer {t}")
        by_layer[t] = node
    route = [by_layer[t] for t in sorted(by_layer)] + [sink]
    _validate_route(route, graph, vehicle)
    return route


def _validate_route(route: list[int], graph: TimeExpandedGraph, vehicle: int) -> None:
    if len(route) < 3:
        raise InputError("route must move at least one slot before the virtual destination")
    if route[0] != graph.source_id(vehicle):
        raise InputError("route must start at the vehicle's source node")
    if route[-1] != graph.sink_id(vehicle):
        raise InputError("route must end at the vehicle's virtual destination")
    for a, b in zip(route[:-2], route[1:-1]):
        if b not in graph.region_successors(a):
            raise InputError(f"nodes {a} -> {b} are not connected")
    if not graph.has_sink_edge(vehicle, route[-2]):
        raise InputError("final region node has no sink edge within the deadline")
