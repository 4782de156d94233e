"""Pickup objectives over routed assignments.

For a vehicle following a route on the time-expanded graph with assignment
probabilities y on its interior nodes (source and final region node excluded:
no pickups the moment the current trip starts or ends):

* f = 1 - prod over interior (node, dest) pairs of (1 - sum_k y): the exact
  probability of picking up a rider along the route,
* g = min(1, sum of y over the interior): concave surrogate with
  (1 - 1/e) * g <= f <= g,
* h = max(1, sum of y): the scaling that links the surrogate problem to its
  node-variable reformulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InputError
from .texpand import RouteIndicator, TimeExpandedGraph, indicator_to_route, route_to_indicator

_LOG_SPACE_THRESHOLD = 64
_TOL = 1e-9

# y' in node form is keyed (vehicle, node, dest, k)
NodeKey = tuple[int, int, int, int]


@dataclass
class RoutedAssignment:
    """Per-vehicle routes (source..sink node lists) plus assignment probabilities
    keyed (vehicle, node, dest, k). Positive y off a route interior is invalid."""

    routes: list[list[int]]
    y: dict[NodeKey, float]

    def interior(self, vehicle: int) -> list[int]:
        return interior_nodes(self.routes[vehicle])

    def vehicle_items(self, vehicle: int):
        for (i, node, u, k), val in self.y.items():
            if i == vehicle:
                yield (node, u, k), val


def interior_nodes(route: list[int]) -> list[int]:
    """Route nodes that can host pickups: strictly between the source node and
    the final region node preceding the virtual destination."""
    if len(route) < 3:
        return []
    return route[1:-2]


def _factor_sums(ra: RoutedAssignment, vehicle: int) -> dict[tuple[int, int], float]:
    interior = set(ra.interior(vehicle))
    sums: dict[tuple[int, int], float] = {}
    for (node, u, _k), val in ra.vehicle_items(vehicle):
        if val == 0.0:
            continue
        if node not in interior:
            raise InputError(f"vehicle {vehicle}: positive y off the route interior at node {node}")
        sums[(node, u)] = sums.get((node, u), 0.0) + val
    for key, s in sums.items():
        if s < -_TOL or s > 1 + _TOL:
            raise InputError(f"vehicle {vehicle}: aggregate y at {key} outside [0, 1]")
    return sums


def f(ra: RoutedAssignment, vehicle: int) -> float:
    """Probability of a pickup along the route."""
    sums = _factor_sums(ra, vehicle)
    if not sums:
        return 0.0
    factors = [1.0 - min(max(s, 0.0), 1.0) for s in sums.values()]
    if len(factors) <= _LOG_SPACE_THRESHOLD:
        prod = 1.0
        for x in factors:
            prod *= x
        return 1.0 - prod
    log_sum = 0.0
    for x in factors:
        if x == 0.0:
            return 1.0
        log_sum += math.log(x)
    return 1.0 - math.exp(log_sum)


def g(ra: RoutedAssignment, vehicle: int) -> float:
    """Concave upper surrogate: min(1, total y over the route interior)."""
    sums = _factor_sums(ra, vehicle)
    return min(1.0, sum(sums.values()))


def h(ra: RoutedAssignment, vehicle: int) -> float:
    """Scaling factor max(1, total y over the route interior)."""
    sums = _factor_sums(ra, vehicle)
    return max(1.0, sum(sums.values()))


def map_surrogate_to_node_form(
    ra: RoutedAssignment, graph: TimeExpandedGraph
) -> tuple[list[RouteIndicator], dict[NodeKey, float]]:
    """Scale each vehicle's y down by h so the per-vehicle total is at most 1;
    the node-form objective sum y' then equals the surrogate objective sum g."""
    indicators = []
    yprime: dict[NodeKey, float] = {}
    for i, route in enumerate(ra.routes):
        indicators.append(route_to_indicator(route, graph, i))
        hi = h(ra, i)
        for (node, u, k), val in ra.vehicle_items(i):
            if val != 0.0:
                yprime[(i, node, u, k)] = val / hi
    return indicators, yprime


def map_node_form_to_surrogate(
    indicators: list[RouteIndicator],
    yprime: dict[NodeKey, float],
    graph: TimeExpandedGraph,
) -> RoutedAssignment:
    """Restrict y' to each route's interior; off-route entries must be zero."""
    routes = [indicator_to_route(ind, graph) for ind in indicators]
    interiors = [set(interior_nodes(r)) for r in routes]
    y: dict[NodeKey, float] = {}
    for (i, node, u, k), val in yprime.items():
        if val == 0.0:
            continue
        if node not in interiors[i]:
            raise InputError(f"vehicle {i}: node-form y' positive off the route interior at {node}")
        y[(i, node, u, k)] = val
    return RoutedAssignment(routes, y)


def node_form_objective(yprime: dict[NodeKey, float]) -> float:
    return sum(yprime.values())
