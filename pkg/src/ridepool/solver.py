"""Dual-subgradient solver for the joint routing / probabilistic assignment
problem in node form.

Decision variables: one route per vehicle on the time-expanded graph plus
node-form assignment probabilities y' on demand cells (node, dest, k).
Relaxing the coupling y' <= x * p * z with multipliers lambda >= 0 splits
each iteration into

* D1: a transportation LP over y' (vehicle budgets of 1, cell caps k * p),
* D2: one maximum-weight path per vehicle on the acyclic graph, node weights
  sum_(dest,k) lambda * p * z,

followed by a subgradient step on lambda and a primal recovery that re-solves
the assignment restricted to the current routes. A complementary-slackness
certificate on the final iterate proves optimality when it holds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .demand import DemandModel
from .errors import InputError
from .feasibility import FeasibilityTable, TripSpec
from .flow import Arc, solve_transport
from .region_graph import RegionGraph
from .texpand import TimeExpandedGraph, VehicleSpec, build

_TOL = 1e-9


@dataclass(frozen=True)
class Cell:
    """One demand coordinate on the time-expanded graph: (node, dest, count)."""

    node: int
    dest: int
    k: int


class PlanningProblem:
    """Everything one solve needs: graph, demand cells, per-vehicle feasibility.

    ``zmask[i, c]`` is the effective indicator: the stored ride-share
    feasibility AND the cell's node being usable as a route interior node for
    vehicle i (reachable from its source, not the source itself, and with an
    onward edge from which its sink can still be reached).
    """

    def __init__(
        self,
        graph: TimeExpandedGraph,
        cells: list[Cell],
        p: np.ndarray,
        zmask: np.ndarray,
        t_start: int = 0,
    ):
        self.graph = graph
        self.n_vehicles = len(graph.vehicles)
        self.cells = list(cells)
        self.p = np.asarray(p, dtype=float)
        self.caps = self.p * np.array([c.k for c in cells], dtype=float)
        self.zmask = np.asarray(zmask, dtype=bool)
        self.t_start = t_start
        if self.p.shape != (len(cells),) or self.zmask.shape != (self.n_vehicles, len(cells)):
            raise InputError("problem arrays have inconsistent shapes")
        self.cell_node = np.array([c.node for c in cells], dtype=int)
        self._interior_ok = np.stack([interior_usable(graph, i) for i in range(self.n_vehicles)])
        # a cell only matters where its node can actually sit inside a route
        self.zmask = self.zmask & self._interior_ok[:, self.cell_node]

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def interior_ok(self, vehicle: int) -> np.ndarray:
        return self._interior_ok[vehicle]

    def max_step_scale_base(self) -> float:
        if self.n_cells == 0:
            return 0.0
        kvec = np.array([c.k for c in self.cells], dtype=float)
        return float((self.zmask * (self.p * kvec)[None, :]).max())


def interior_usable(graph: TimeExpandedGraph, vehicle: int) -> np.ndarray:
    """Boolean mask over region-time nodes: can this node sit strictly inside
    some route of the vehicle?"""
    n = graph.n_region_nodes
    fwd = np.zeros(n, dtype=bool)
    src = graph.source_id(vehicle)
    fwd[src] = True
    order = sorted(range(n), key=graph.node_time)
    for node in order:
        if fwd[node]:
            for succ in graph.region_successors(node):
                fwd[succ] = True
    to_sink = np.zeros(n, dtype=bool)
    for node in range(n):
        if graph.has_sink_edge(vehicle, node):
            to_sink[node] = True
    for node in sorted(range(n), key=graph.node_time, reverse=True):
        if not to_sink[node]:
            to_sink[node] = any(to_sink[s] for s in graph.region_successors(node))
    usable = np.zeros(n, dtype=bool)
    for node in range(n):
        if fwd[node] and node != src:
            usable[node] = any(to_sink[s] for s in graph.region_successors(node))
    return usable


def build_problem(
    region_graph: RegionGraph,
    trips: list[TripSpec],
    budgets: list[int],
    elapsed: list[int],
    demand: DemandModel,
    feas: FeasibilityTable,
    t_start: int,
    allow_waiting: bool = False,
    origins: list[int] | None = None,
) -> PlanningProblem:
    """Assemble a solve for vehicles currently `elapsed` slots into their trips.

    `budgets[i]` is the remaining slot budget (trip deadline minus elapsed);
    `origins[i]` the current region (defaults to the trip origin). Demand is
    read at absolute slots t_start + layer.
    """
    if origins is None:
        origins = [t.origin for t in trips]
    specs = [VehicleSpec(origins[i], trips[i].dest, budgets[i]) for i in range(len(trips))]
    graph = build(region_graph, specs, allow_waiting=allow_waiting)
    cells: list[Cell] = []
    probs: list[float] = []
    for (t_abs, v, u), arr in demand.cells_in_window(t_start + 1, t_start + graph.tau):
        layer = t_abs - t_start
        node = graph.node_id(v, layer)
        for k in range(1, demand.K + 1):
            if arr[k - 1] > 0:
                cells.append(Cell(node, u, k))
                probs.append(float(arr[k - 1]))
    zmask = np.zeros((len(trips), len(cells)), dtype=bool)
    for i, trip in enumerate(trips):
        for c_idx, cell in enumerate(cells):
            layer = graph.node_time(cell.node)
            region = graph.node_region(cell.node)
            zmask[i, c_idx] = bool(feas.z(trip, elapsed[i] + layer, region, cell.dest))
    return PlanningProblem(graph, cells, np.array(probs), zmask, t_start=t_start)


def explicit_problem(
    region_graph: RegionGraph,
    specs: list[VehicleSpec],
    cell_probs: dict[tuple[int, int, int, int], float],
    z_entries: set[tuple[int, int, int, int]],
    t_start: int = 0,
) -> PlanningProblem:
    """Problem with hand-specified demand and feasibility.

    `cell_probs` keys are (slot, region, dest, k); `z_entries` contains the
    (vehicle, slot, region, dest) combinations deemed feasible.
    """
    graph = build(region_graph, specs)
    cells = []
    probs = []
    for (t, v, u, k), p in sorted(cell_probs.items()):
        cells.append(Cell(graph.node_id(v, t), u, k))
        probs.append(p)
    zmask = np.zeros((len(specs), len(cells)), dtype=bool)
    for i in range(len(specs)):
        for c_idx, cell in enumerate(cells):
            key = (i, graph.node_time(cell.node), graph.node_region(cell.node), cell.dest)
            zmask[i, c_idx] = key in z_entries
    return PlanningProblem(graph, cells, np.array(probs), zmask, t_start=t_start)


# ---------------------------------------------------------------------------
# subproblems


def solve_d1(lam: np.ndarray, problem: PlanningProblem) -> tuple[np.ndarray, float]:
    """Assignment subproblem: maximize sum (1 - lambda) y' under per-vehicle
    budgets of 1 and cell caps k*p. Exact via the transport solver."""
    yprime = np.zeros((problem.n_vehicles, problem.n_cells))
    if problem.n_cells == 0:
        return yprime, 0.0
    arcs = []
    for i in range(problem.n_vehicles):
        for c in range(problem.n_cells):
            w = 1.0 - lam[i, c]
            if w > _TOL:
                arcs.append(Arc(i, c, w, np.inf))
    flow, value = solve_transport(arcs, np.ones(problem.n_vehicles), problem.caps)
    for (i, c), x in flow.items():
        yprime[i, c] = x
    return yprime, value


def solve_d2(lam: np.ndarray, problem: PlanningProblem) -> tuple[list[list[int]], np.ndarray, float]:
    """Routing subproblem: per vehicle, the maximum-weight source-sink path,
    counting node weights only where the node is route-interior.

    Returns (routes, interior indicator over (vehicle, node), total value).
    Ties take the lexicographically smallest node sequence.
    """
    graph = problem.graph
    n_nodes = graph.n_region_nodes
    routes = []
    interior_x = np.zeros((problem.n_vehicles, n_nodes), dtype=bool)
    total = 0.0
    order = sorted(range(n_nodes), key=lambda nd: (graph.node_time(nd), nd), reverse=True)
    for i in range(problem.n_vehicles):
        w = np.zeros(n_nodes)
        if problem.n_cells:
            np.add.at(w, problem.cell_node, lam[i] * problem.p * problem.zmask[i])
        src = graph.source_id(i)
        dep_w = w.copy()
        dep_w[src] = 0.0  # departures from the source collect nothing

        best = np.full(n_nodes, -np.inf)
        for node in order:
            b = -np.inf
            if graph.has_sink_edge(i, node):
                b = 0.0
            for succ in graph.region_successors(node):
                if best[succ] > -np.inf:
                    cand = dep_w[node] + best[succ]
                    if cand > b:
                        b = cand
            best[node] = b
        if best[src] == -np.inf:
            raise InputError(f"vehicle {i}: no route to its virtual destination")

        route = [src]
        node = src
        while True:
            target = best[node]
            nxt = None
            for succ in graph.region_successors(node):  # ascending id: lexicographic
                if best[succ] > -np.inf and dep_w[node] + best[succ] == target:
                    nxt = succ
                    break
            if nxt is None:
                if not graph.has_sink_edge(i, node):
                    raise RuntimeError("path walk lost the optimum")
                route.append(graph.sink_id(i))
                break
            route.append(nxt)
            node = nxt
        routes.append(route)
        for nd in route[1:-2]:
            interior_x[i, nd] = True
        total += float(best[src])
    return routes, interior_x, total


def coupling_bound(problem: PlanningProblem, interior_x: np.ndarray) -> np.ndarray:
    """Right-hand side of the relaxed constraint: x * p * z per (vehicle, cell)."""
    at_cells = interior_x[:, problem.cell_node] if problem.n_cells else np.zeros((problem.n_vehicles, 0), dtype=bool)
    return at_cells * problem.zmask * problem.p[None, :]


def recover_primal(
    routes_interior: np.ndarray, problem: PlanningProblem
) -> tuple[np.ndarray, float]:
    """Best feasible y' for fixed routes: same transport structure, arcs only
    on route-interior cells with z = 1, per-arc cap p, all profits 1."""
    yprime = np.zeros((problem.n_vehicles, problem.n_cells))
    if problem.n_cells == 0:
        return yprime, 0.0
    bound = coupling_bound(problem, routes_interior)
    arcs = []
    for i in range(problem.n_vehicles):
        for c in range(problem.n_cells):
            if bound[i, c] > 0:
                arcs.append(Arc(i, c, 1.0, bound[i, c]))
    flow, value = solve_transport(arcs, np.ones(problem.n_vehicles), problem.caps)
    for (i, c), x in flow.items():
        yprime[i, c] = x
    return yprime, value


@dataclass
class StepSchedule:
    """Diminishing steps phi0/sqrt(t), switching to phi0/t once the gap nears
    the termination threshold."""

    phi0: float
    fast: bool = False

    def step(self, iteration: int) -> float:
        if self.fast:
            return self.phi0 / iteration
        return self.phi0 / math.sqrt(iteration)


def subgradient_step(
    lam: np.ndarray,
    yprime: np.ndarray,
    interior_x: np.ndarray,
    problem: PlanningProblem,
    step: float,
) -> np.ndarray:
    """lambda <- [lambda + step * (y' - x p z)]+ (projection onto >= 0)."""
    grad = yprime - coupling_bound(problem, interior_x)
    return np.maximum(0.0, lam + step * grad)


@dataclass
class CertificateResult:
    holds: bool
    witnesses: list[tuple[int, int]] = field(default_factory=list)  # (vehicle, cell index)

    @property
    def status(self) -> str:
        return "HOLDS" if self.holds else "FAILS"


def certify(
    interior_x: np.ndarray,
    yprime: np.ndarray,
    lam: np.ndarray,
    problem: PlanningProblem,
    tol: float = _TOL,
) -> CertificateResult:
    """Complementary-slackness check on the relaxed coupling constraint.

    Where lambda > 0 the slack y' - x p z must vanish; elsewhere it must be
    nonpositive. If this holds, the final (routes, y') pair is feasible and
    optimal for the node-form problem.
    """
    if problem.n_cells == 0:
        return CertificateResult(True)
    slack = yprime - coupling_bound(problem, interior_x)
    bad = np.where(lam > tol, np.abs(slack) > tol, slack > tol)
    witnesses = [(int(i), int(c)) for i, c in zip(*np.nonzero(bad))]
    return CertificateResult(not witnesses, witnesses)


# ---------------------------------------------------------------------------
# main loop


@dataclass
class SolverConfig:
    gap_threshold: float = 1e-3
    max_iterations: int = 2000
    step_scale: float | None = None  # phi0; derived from the instance if None
    fast_gap_factor: float = 5.0
    keep_trace: bool = True


@dataclass
class IterationRow:
    iteration: int
    dual: float
    primal: float
    gap: float
    step: float


@dataclass
class DualState:
    lam: np.ndarray
    iteration: int
    schedule: StepSchedule
    best_dual: float
    best_primal: float
    best_routes: list[list[int]]
    best_yprime: np.ndarray


@dataclass
class SolveReport:
    primal_value: float
    dual_value: float
    gap: float
    iterations: int
    converged: bool
    certificate: CertificateResult
    routes: list[list[int]]
    yprime: np.ndarray
    problem: PlanningProblem
    trace: list[IterationRow] = field(default_factory=list)
    final_lambda: np.ndarray | None = None

    @property
    def status(self) -> str:
        return "CONVERGED" if self.converged else "NOT_CONVERGED"

    def route_regions(self, vehicle: int) -> list[tuple[int, int]]:
        """Route as (region, absolute slot) pairs, virtual destination dropped."""
        g = self.problem.graph
        out = []
        for node in self.routes[vehicle][:-1]:
            out.append((g.node_region(node), g.node_time(node) + self.problem.t_start))
        return out

    def yprime_entries(self) -> list[tuple[int, int, int, int, int, float]]:
        """Sorted (vehicle, region, absolute slot, dest, k, value) with value > 0."""
        g = self.problem.graph
        rows = []
        for i in range(self.problem.n_vehicles):
            for c, cell in enumerate(self.problem.cells):
                val = float(self.yprime[i, c])
                if val > 0:
                    rows.append(
                        (i, g.node_region(cell.node), g.node_time(cell.node) + self.problem.t_start,
                         cell.dest, cell.k, val)
                    )
        rows.sort()
        return rows

    def to_json_dict(self) -> dict:
        cert = {"status": self.certificate.status,
                "witnesses": [list(w) for w in self.certificate.witnesses[:50]]}
        return {
            "primal_value": float(self.primal_value),
            "dual_value": float(self.dual_value),
            "gap": float(self.gap),
            "iterations": self.iterations,
            "status": self.status,
            "certificate": cert,
            "routes": [self.route_regions(i) for i in range(len(self.routes))],
            "assignments": [list(row) for row in self.yprime_entries()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":")) + "\n"


def solve(
    problem: PlanningProblem,
    config: SolverConfig | None = None,
    warm_lambda: np.ndarray | None = None,
) -> SolveReport:
    config = config or SolverConfig()
    n, c = problem.n_vehicles, problem.n_cells
    lam = np.zeros((n, c)) if warm_lambda is None else np.array(warm_lambda, dtype=float)
    if lam.shape != (n, c):
        raise InputError("warm lambda has the wrong shape")

    phi0 = config.step_scale
    if phi0 is None:
        phi0 = 1.0 / max(problem.max_step_scale_base(), 1e-3)
    schedule = StepSchedule(phi0)

    best_dual = math.inf
    best_primal = -math.inf
    best_routes: list[list[int]] = []
    best_yprime = np.zeros((n, c))
    trace: list[IterationRow] = []
    converged = False
    last = None
    iterations = 0

    for it in range(1, config.max_iterations + 1):
        iterations = it
        yprime, d1_value = solve_d1(lam, problem)
        routes, interior_x, d2_value = solve_d2(lam, problem)
        dual = d1_value + d2_value
        best_dual = min(best_dual, dual)

        y_rec, primal = recover_primal(interior_x, problem)
        if primal > best_primal:
            best_primal = primal
            best_routes = routes
            best_yprime = y_rec

        cert_now = certify(interior_x, yprime, lam, problem)
        if cert_now.holds:
            value = float(yprime.sum())
            if value > best_primal:
                best_primal = value
                best_routes = routes
                best_yprime = yprime

        # weak duality must hold for every recovered primal, every iteration
        assert dual >= primal - _TOL, f"weak duality violated: {dual} < {primal}"
        assert best_dual >= best_primal - _TOL

        gap = (best_dual - best_primal) / max(1.0, best_dual)
        step = schedule.step(it)
        if config.keep_trace:
            trace.append(IterationRow(it, float(dual), float(primal), float(gap), float(step)))
        last = (routes, interior_x, yprime)

        if gap <= config.gap_threshold:
            converged = True
            break
        if gap <= config.fast_gap_factor * config.gap_threshold:
            schedule.fast = True
        lam = subgradient_step(lam, yprime, interior_x, problem, step)

    routes, interior_x, yprime = last
    certificate = certify(interior_x, yprime, lam, problem)
    gap = (best_dual - best_primal) / max(1.0, best_dual)
    return SolveReport(
        primal_value=float(best_primal),
        dual_value=float(best_dual),
        gap=float(gap),
        iterations=iterations,
        converged=converged,
        certificate=certificate,
        routes=best_routes,
        yprime=best_yprime,
        problem=problem,
        trace=trace,
        final_lambda=lam,
    )
