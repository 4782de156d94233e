"""Packaged scenarios: a small routing instance with a known integer/fractional
objective split, and a synthetic demand-rich network for scheme comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .demand import DemandModel
from .region_graph import RegionGraph, synthetic_region_graph
from .solver import PlanningProblem, explicit_problem
from .texpand import VehicleSpec

# region labels for the split-route instance
S1, S2, N1, N2, N3, D1, D2 = range(7)


@dataclass
class GapScenario:
    """Two vehicles, three demand cells; splitting one vehicle's route
    fractionally beats every integer route choice."""

    region_graph: RegionGraph
    problem: PlanningProblem
    integer_optimum: float
    fractional_value: float
    fractional_flows: list[dict[tuple[int, int], float]]
    fractional_yprime: dict[tuple[int, int, int], float]


def integrality_gap_scenario() -> GapScenario:
    edges = [
        (S1, N1, 1), (S1, N2, 1), (N1, D1, 1), (N2, D1, 1),
        (S2, N2, 1), (N2, N3, 1), (N3, D2, 1),
    ]
    graph = synthetic_region_graph(7, edges)
    specs = [VehicleSpec(S1, D1, 2), VehicleSpec(S2, D2, 3)]  # no-slack deadlines
    cell_probs = {
        (1, N1, D1, 1): 0.1,
        (1, N2, D2, 1): 1.0,
        (2, N3, D2, 1): 0.3,
    }
    z_entries = {
        (0, 1, N1, D1),
        (0, 1, N2, D2),
        (1, 1, N2, D2),
        (1, 2, N3, D2),
    }
    problem = explicit_problem(graph, specs, cell_probs, z_entries)
    te = problem.graph

    def cell_index(t, v, u):
        node = te.node_id(v, t)
        for idx, cell in enumerate(problem.cells):
            if cell.node == node and cell.dest == u:
                return idx
        raise KeyError((t, v, u))

    flows = [
        {
            (te.node_id(S1, 0), te.node_id(N2, 1)): 0.3,
            (te.node_id(N2, 1), te.node_id(D1, 2)): 0.3,
            (te.node_id(S1, 0), te.node_id(N1, 1)): 0.7,
            (te.node_id(N1, 1), te.node_id(D1, 2)): 0.7,
            (te.node_id(D1, 2), te.sink_id(0)): 1.0,
        },
        {
            (te.node_id(S2, 0), te.node_id(N2, 1)): 1.0,
            (te.node_id(N2, 1), te.node_id(N3, 2)): 1.0,
            (te.node_id(N3, 2), te.node_id(D2, 3)): 1.0,
            (te.node_id(D2, 3), te.sink_id(1)): 1.0,
        },
    ]
    yprime = {
        (0, cell_index(1, N2, D2)): 0.3,
        (0, cell_index(1, N1, D1)): 0.07,
        (1, cell_index(1, N2, D2)): 0.7,
        (1, cell_index(2, N3, D2)): 0.3,
    }
    return GapScenario(
        region_graph=graph,
        problem=problem,
        integer_optimum=1.3,
        fractional_value=1.37,
        fractional_flows=flows,
        fractional_yprime=yprime,
    )


@dataclass
class ComparisonScenario:
    """Synthetic network for comparing dispatch schemes.

    A short demand-free corridor (the fastest route) competes with two longer
    demand-rich corridors that fit within the deadline slack, so oblivious
    routing misses the requests and per-vehicle routing piles every vehicle
    onto the same corridor.
    """

    region_graph: RegionGraph
    demand: DemandModel
    alpha: float
    K: int
    sources: tuple[int, ...]
    destinations: tuple[int, ...]
    start_slot: int
    horizon: int


def two_corridor_scenario(fleet_size: int = 4) -> ComparisonScenario:
    # region 0 = start, 7 = goal; corridors A: 1-2-3, B: 4-5-6, express: 8-9
    edges = [
        (0, 1, 1), (1, 2, 1), (2, 3, 1), (3, 7, 1),
        (0, 4, 1), (4, 5, 1), (5, 6, 1), (6, 7, 1),
        (0, 8, 1), (8, 9, 1), (9, 7, 1),
    ]
    graph = synthetic_region_graph(10, edges)
    horizon = 48
    start = 0
    cells = {
        (start + 1, 1, 7): np.array([0.95]),
        (start + 2, 2, 7): np.array([0.95]),
        (start + 1, 4, 7): np.array([0.85]),
        (start + 2, 5, 7): np.array([0.85]),
    }
    demand = DemandModel(horizon=horizon, K=1, cells=cells)
    return ComparisonScenario(
        region_graph=graph,
        demand=demand,
        alpha=1.4,  # deadline ceil(1.4 * 3) = 5 slots: both long corridors fit
        K=1,
        sources=tuple([0] * fleet_size),
        destinations=tuple([7] * fleet_size),
        start_slot=start,
        horizon=horizon,
    )
