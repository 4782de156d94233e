"""Desk-scale brute-force references for the solver.

Every oracle enumerates exhaustively (routes, lattice grids, paths) under an
explicit budget and refuses with a size estimate when the instance is too
large. They share nothing with the production code paths they check except
the problem container itself.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceeded, InputError
from .flow import Arc, solve_transport
from .solver import PlanningProblem

_TOL = 1e-9


@dataclass(frozen=True)
class OracleBudget:
    max_vehicles: int = 2
    max_nodes: int = 12  # reachable time-expanded nodes per vehicle
    grid_resolution: float = 0.05
    max_route_tuples: int = 20000
    max_grid_points: int = 2_000_000


def _reachable_counts(problem: PlanningProblem, vehicle: int) -> int:
    graph = problem.graph
    usable = problem.interior_ok(vehicle)
    # interior candidates plus source, terminal candidates and the sink
    count = int(usable.sum()) + 2
    for node in range(graph.n_region_nodes):
        if graph.has_sink_edge(vehicle, node) and not usable[node]:
            count += 1
    return count


def enumerate_routes(problem: PlanningProblem, vehicle: int) -> list[list[int]]:
    """All source-to-sink paths for one vehicle, depth first, ascending ids."""
    graph = problem.graph
    sink = graph.sink_id(vehicle)
    routes: list[list[int]] = []
    stack = [(graph.source_id(vehicle), [graph.source_id(vehicle)])]
    while stack:
        node, path = stack.pop()
        if graph.has_sink_edge(vehicle, node):
            routes.append(path + [sink])
        for succ in reversed(graph.region_successors(node)):
            stack.append((succ, path + [succ]))
    routes.sort()
    return routes


def preflight(problem: PlanningProblem, budget: OracleBudget) -> dict:
    """Check the enumeration size before running; raises BudgetExceeded."""
    if problem.n_vehicles > budget.max_vehicles:
        raise BudgetExceeded(f"{problem.n_vehicles} vehicles exceed budget {budget.max_vehicles}")
    counts = []
    for i in range(problem.n_vehicles):
        nodes = _reachable_counts(problem, i)
        if nodes > budget.max_nodes:
            raise BudgetExceeded(f"vehicle {i} reaches {nodes} nodes, budget {budget.max_nodes}")
        counts.append(nodes)
    route_counts = [len(enumerate_routes(problem, i)) for i in range(problem.n_vehicles)]
    tuples = math.prod(route_counts)
    if tuples > budget.max_route_tuples:
        raise BudgetExceeded(f"{tuples} route tuples exceed budget {budget.max_route_tuples}")
    return {"reachable_nodes": counts, "route_counts": route_counts, "route_tuples": tuples}


@dataclass
class NodeFormOptimum:
    value: float
    routes: list[list[int]]
    yprime: np.ndarray
    report: dict = field(default_factory=dict)


def _interior_mask(problem: PlanningProblem, routes: list[list[int]]) -> np.ndarray:
    x = np.zeros((problem.n_vehicles, problem.graph.n_region_nodes), dtype=bool)
    for i, route in enumerate(routes):
        for node in route[1:-2]:
            x[i, node] = True
    return x


def _restricted_assignment(problem: PlanningProblem, interior_x: np.ndarray) -> tuple[np.ndarray, float]:
    bound = interior_x[:, problem.cell_node] * problem.zmask * problem.p[None, :]
    arcs = [
        Arc(i, c, 1.0, bound[i, c])
        for i in range(problem.n_vehicles)
        for c in range(problem.n_cells)
        if bound[i, c] > 0
    ]
    flow, value = solve_transport(arcs, np.ones(problem.n_vehicles), problem.caps)
    yprime = np.zeros((problem.n_vehicles, problem.n_cells))
    for (i, c), v in flow.items():
        yprime[i, c] = v
    return yprime, value


def oracle_node_form(problem: PlanningProblem, budget: OracleBudget | None = None) -> NodeFormOptimum:
    """Optimum of the node-form problem by full route-tuple enumeration; the
    inner assignment LP is solved exactly per tuple."""
    budget = budget or OracleBudget()
    report = preflight(problem, budget)
    all_routes = [enumerate_routes(problem, i) for i in range(problem.n_vehicles)]
    best = NodeFormOptimum(-math.inf, [], np.zeros((problem.n_vehicles, problem.n_cells)), report)
    for combo in itertools.product(*all_routes):
        interior_x = _interior_mask(problem, list(combo))
        yprime, value = _restricted_assignment(problem, interior_x)
        if value > best.value + _TOL:
            best = NodeFormOptimum(value, [list(r) for r in combo], yprime, report)
    return best


@dataclass
class ExactOptimum:
    value: float
    routes: list[list[int]]
    y: np.ndarray
    grid_error: float
    report: dict = field(default_factory=dict)


def oracle_exact(problem: PlanningProblem, budget: OracleBudget | None = None) -> ExactOptimum:
    """Grid-search reference for the exact (non-concave) pickup objective.

    For each route tuple the feasible y coordinates (route interior, z = 1,
    p > 0) are swept on a lattice of the given resolution; the reported
    optimum is within n_coords * resolution of the true one.
    """
    budget = budget or OracleBudget()
    report = preflight(problem, budget)
    all_routes = [enumerate_routes(problem, i) for i in range(problem.n_vehicles)]
    res = budget.grid_resolution
    best_value = -math.inf
    best = ExactOptimum(0.0, [r[0] for r in all_routes], np.zeros((problem.n_vehicles, problem.n_cells)), 0.0, report)
    worst_coords = 0

    for combo in itertools.product(*all_routes):
        interior_x = _interior_mask(problem, list(combo))
        coords = [
            (i, c)
            for i in range(problem.n_vehicles)
            for c in range(problem.n_cells)
            if interior_x[i, problem.cell_node[c]] and problem.zmask[i, c] and problem.p[c] > 0
        ]
        worst_coords = max(worst_coords, len(coords))
        if not coords:
            value = 0.0
            if value > best_value:
                best_value = value
                best = ExactOptimum(value, [list(r) for r in combo],
                                    np.zeros((problem.n_vehicles, problem.n_cells)), 0.0, report)
            continue

        axes = []
        for (i, c) in coords:
            top = min(1.0, problem.p[c])
            steps = int(math.floor(round(top / res, 9)))
            axes.append(np.arange(steps + 1) * res)
        n_points = math.prod(len(a) for a in axes)
        if n_points > budget.max_grid_points:
            raise BudgetExceeded(f"{n_points} grid points exceed budget {budget.max_grid_points}")

        grids = np.meshgrid(*axes, indexing="ij", sparse=True)
        feasible = np.ones((1,) * len(axes), dtype=bool)
        # shared caps: sum over vehicles per cell <= k * p
        by_cell: dict[int, list[int]] = {}
        for idx, (i, c) in enumerate(coords):
            by_cell.setdefault(c, []).append(idx)
        for c, idxs in by_cell.items():
            total = sum(grids[j] for j in idxs)
            feasible = feasible & (total <= problem.caps[c] + _TOL)

        objective = 0.0
        for i in range(problem.n_vehicles):
            by_node_dest: dict[tuple[int, int], list[int]] = {}
            for idx, (vi, c) in enumerate(coords):
                if vi == i:
                    cell = problem.cells[c]
                    by_node_dest.setdefault((cell.node, cell.dest), []).append(idx)
            if not by_node_dest:
                continue
            miss = 1.0
            for idxs in by_node_dest.values():
                s = sum(grids[j] for j in idxs)
                miss = miss * (1.0 - s)
            objective = objective + (1.0 - miss)

        masked = np.asarray(np.where(feasible, objective, -np.inf))
        flat = int(np.argmax(masked))
        value = float(masked.ravel()[flat])
        if value > best_value + _TOL:
            best_value = value
            multi = np.unravel_index(flat, masked.shape)
            y = np.zeros((problem.n_vehicles, problem.n_cells))
            for idx, (i, c) in enumerate(coords):
                y[i, c] = axes[idx][multi[idx]]
            best = ExactOptimum(value, [list(r) for r in combo], y, worst_coords * res, report)
    best.grid_error = worst_coords * res
    return best


def oracle_d1_grid(
    weights: np.ndarray, budgets: np.ndarray, caps: np.ndarray, resolution: float = 0.05
) -> tuple[float, np.ndarray]:
    """Lattice enumeration of the assignment LP. Exact whenever budgets and
    caps are lattice multiples (the constraint matrix is totally unimodular,
    so some optimal vertex then lies on the lattice)."""
    n_rows, n_cols = weights.shape
    axes = []
    for i in range(n_rows):
        for c in range(n_cols):
            top = min(float(budgets[i]), float(caps[c]), 1.0)
            steps = int(math.floor(round(top / resolution, 9)))
            axes.append(np.arange(steps + 1) * resolution)
    n_points = math.prod(len(a) for a in axes)
    if n_points > 5_000_000:
        raise BudgetExceeded(f"{n_points} lattice points")
    grids = np.meshgrid(*axes, indexing="ij", sparse=True)
    feasible = np.ones((1,) * len(axes), dtype=bool)
    idx = lambda i, c: i * n_cols + c
    for i in range(n_rows):
        row_sum = sum(grids[idx(i, c)] for c in range(n_cols))
        feasible = feasible & (row_sum <= budgets[i] + _TOL)
    for c in range(n_cols):
        col_sum = sum(grids[idx(i, c)] for i in range(n_rows))
        feasible = feasible & (col_sum <= caps[c] + _TOL)
    objective = sum(weights[i, c] * grids[idx(i, c)] for i in range(n_rows) for c in range(n_cols))
    masked = np.where(feasible, objective, -np.inf)
    flat = int(np.argmax(masked))
    value = float(np.asarray(masked).ravel()[flat])
    multi = np.unravel_index(flat, np.asarray(masked).shape)
    y = np.zeros((n_rows, n_cols))
    for i in range(n_rows):
        for c in range(n_cols):
            y[i, c] = axes[idx(i, c)][multi[idx(i, c)]]
    return value, y


def oracle_longest_route(problem: PlanningProblem, weights: np.ndarray, vehicle: int) -> tuple[float, list[int]]:
    """Maximum interior weight over all routes, by full enumeration."""
    routes = enumerate_routes(problem, vehicle)
    best_value = -math.inf
    best_route: list[int] = []
    for route in routes:
        value = float(sum(weights[node] for node in route[1:-2]))
        if value > best_value + _TOL:
            best_value = value
            best_route = route
    return best_value, best_route


def random_problem(
    seed: int,
    max_vehicles: int = 2,
    budget: OracleBudget | None = None,
    max_coords: int = 6,
) -> PlanningProblem:
    """Random desk-scale instance within the oracle budget, feasibility derived
    through the real precompute pipeline. Deterministic per seed."""
    from .demand import DemandModel
    from .feasibility import TripSpec, deadline, precompute
    from .region_graph import synthetic_region_graph
    from .solver import build_problem

    rng = np.random.default_rng(seed)
    budget = budget or OracleBudget()
    for _attempt in range(200):
        n = int(rng.integers(3, 6))
        edges = [(i, (i + 1) % n, 1) for i in range(n)]  # ring keeps it strongly connected
        for u in range(n):
            for v in range(n):
                if u != v and (u, v) not in {(a, b) for a, b, _ in edges} and rng.random() < 0.3:
                    edges.append((u, v, int(rng.integers(1, 3))))
        graph = synthetic_region_graph(n, edges)
        n_vehicles = int(rng.integers(1, max_vehicles + 1))
        alpha = float(rng.choice([1.0, 1.2, 1.4]))
        trips = []
        ok = True
        for _ in range(n_vehicles):
            pairs = [
                (s, d)
                for s in range(n)
                for d in range(n)
                if s != d and 2 <= graph.graph_time(s, d) <= 3
            ]
            if not pairs:
                ok = False
                break
            s, d = pairs[int(rng.integers(0, len(pairs)))]
            trips.append(TripSpec(s, d, deadline(s, d, alpha, graph)))
        if not ok or not trips:
            continue
        tau = max(t.deadline for t in trips)
        if tau > 4:
            continue
        n_cells = int(rng.integers(2, 5))
        cells: dict[tuple[int, int, int], np.ndarray] = {}
        for _ in range(n_cells):
            t = int(rng.integers(1, tau + 1))
            v = int(rng.integers(0, n))
            u = int(rng.integers(0, n))
            if v == u or (t, v, u) in cells:
                continue
            k_val = int(rng.integers(1, 3))
            probs = np.zeros(2)
            probs[k_val - 1] = float(rng.integers(1, 13)) * 0.05
            cells[(t, v, u)] = probs
        if not cells:
            continue
        demand = DemandModel(horizon=tau + 1, K=2, cells=cells)
        feas = precompute(graph, alpha, trips)
        try:
            problem = build_problem(
                graph, trips, [t.deadline for t in trips], [0] * len(trips),
                demand, feas, t_start=0,
            )
            preflight(problem, budget)
        except (InputError, BudgetExceeded):
            continue
        if problem.n_cells == 0 or not problem.zmask.any():
            continue
        if int(problem.zmask.sum()) > max_coords:
            continue
        return problem
    raise RuntimeError(f"could not generate a budget-sized instance from seed {seed}")


def verify_fractional_routing(
    problem: PlanningProblem,
    flows: list[dict[tuple[int, int], float]],
    yprime: dict[tuple[int, int, int], float],
) -> float:
    """Check a fractional route solution: per-vehicle unit flows over the
    time-expanded edges with y' bounded by (departing flow) * p * z.

    `yprime` is keyed (vehicle, cell index). Returns the objective value or
    raises InputError naming the violated condition.
    """
    graph = problem.graph
    for i, flow in enumerate(flows):
        out_at: dict[int, float] = {}
        in_at: dict[int, float] = {}
        for (a, b), x in flow.items():
            if x < -_TOL:
                raise InputError(f"vehicle {i}: negative flow on ({a}, {b})")
            ok = (not graph.is_sink(a)) and (
                b in graph.region_successors(a) or (b == graph.sink_id(i) and graph.has_sink_edge(i, a))
            )
            if not ok:
                raise InputError(f"vehicle {i}: ({a}, {b}) is not an edge")
            out_at[a] = out_at.get(a, 0.0) + x
            in_at[b] = in_at.get(b, 0.0) + x
        src, sink = graph.source_id(i), graph.sink_id(i)
        if abs(out_at.get(src, 0.0) - 1.0) > _TOL or abs(in_at.get(sink, 0.0) - 1.0) > _TOL:
            raise InputError(f"vehicle {i}: source/sink flow is not one unit")
        for node in set(out_at) | set(in_at):
            if node in (src, sink):
                continue
            if abs(out_at.get(node, 0.0) - in_at.get(node, 0.0)) > _TOL:
                raise InputError(f"vehicle {i}: flow imbalance at node {node}")

    total = 0.0
    per_vehicle = np.zeros(problem.n_vehicles)
    per_cell = np.zeros(problem.n_cells)
    for (i, c), val in yprime.items():
        if val < -_TOL:
            raise InputError("negative assignment value")
        node = problem.cell_node[c]
        departing = sum(
            x for (a, b), x in flows[i].items()
            if a == node and not graph.is_sink(b)
        )
        x_frac = 0.0 if node == problem.graph.source_id(i) else departing
        bound = x_frac * problem.p[c] * problem.zmask[i, c]
        if val > bound + _TOL:
            raise InputError(f"assignment ({i}, {c}) exceeds its route-coupling bound")
        per_vehicle[i] += val
        per_cell[c] += val
        total += val
    if (per_vehicle > 1 + _TOL).any():
        raise InputError("a vehicle budget exceeds one")
    for c in range(problem.n_cells):
        if per_cell[c] > problem.caps[c] + _TOL:
            raise InputError(f"cell {c} exceeds its cap")
    return total
