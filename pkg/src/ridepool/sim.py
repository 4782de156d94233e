"""Discrete-event fleet simulator.

Slot loop per episode: vehicles move along committed plans and deliver on
arrival; realized requests are assigned to vehicles present in their region
(wheel draw for the joint scheme, per-vehicle willingness plus uniform
conflict resolution otherwise); the fleet re-plans at state-change epochs
(any real or roaming-target delivery, or an empty vehicle picking up).

Vehicles hold at most two passengers. A vehicle with both seats busy follows
its stored two-passenger plan and accepts nothing. An empty vehicle roams
toward a hot spot, modeled as carrying one virtual passenger with a
self-selected deadline; the virtual trip is dropped the moment a real rider
is assigned.
"""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from .assignment import build_wheel, draw
from .demand import DemandModel, TripRecord, sample_realization
from .errors import InputError
from .feasibility import FeasibilityTable, TripSpec, deadline
from .region_graph import RegionGraph
from .solver import SolverConfig, build_problem, solve

SCHEMES = ("joint", "independent", "fastest")


@dataclass(frozen=True)
class Instance:
    sources: tuple[int, ...]
    destinations: tuple[int, ...]
    start_slot: int
    id: str = ""

    def __post_init__(self):
        if len(self.sources) != len(self.destinations) or not self.sources:
            raise InputError("instance needs matching, nonempty source/destination vectors")
        if not self.id:
            blob = f"{self.sources}|{self.destinations}|{self.start_slot}"
            object.__setattr__(self, "id", hashlib.sha256(blob.encode()).hexdigest()[:10])


def sample_instances(
    records: list[TripRecord],
    graph: RegionGraph,
    n_vehicles: int,
    start_slot: int,
    count: int,
    rng,
    min_path_edges: int = 4,
    slots_per_hour: int = 12,
) -> list[Instance]:
    """Draw (source, destination) vectors from trace records whose pickup falls
    in the same hour as start_slot, keeping pairs whose fastest region path
    uses more than `min_path_edges - 1` edges."""
    gen = np.random.default_rng(rng)
    hour = start_slot // slots_per_hour
    pool = []
    for rec in records:
        if rec.pickup_slot // slots_per_hour != hour:
            continue
        path = graph.fastest_region_path(rec.pickup_region, rec.dropoff_region)
        if path is None or len(path) - 1 < min_path_edges:
            continue
        pool.append((rec.pickup_region, rec.dropoff_region))
    if not pool:
        raise InputError(f"no usable trace pairs in the hour of slot {start_slot}")
    instances = []
    for _ in range(count):
        picks = gen.integers(0, len(pool), size=n_vehicles)
        src = tuple(pool[j][0] for j in picks)
        dst = tuple(pool[j][1] for j in picks)
        instances.append(Instance(src, dst, start_slot))
    return instances


@dataclass
class TripOnBoard:
    origin: int
    dest: int
    pickup_slot: int
    deadline: int
    virtual: bool = False

    @property
    def spec(self) -> TripSpec:
        return TripSpec(self.origin, self.dest, self.deadline)

    def elapsed(self, now: int) -> int:
        return now - self.pickup_slot


@dataclass(frozen=True)
class RoutePlan:
    """Committed single-passenger route with its assignment probabilities.

    nodes[0] is the position the plan was made at; the final node delivers
    the on-board trip. ``y`` maps (region, slot, dest, k) to the planned
    assignment probability; empty with ``oblivious`` set for fastest routing.
    """

    nodes: tuple[tuple[int, int], ...]
    y: MappingProxyType
    oblivious: bool = False


@dataclass
class RideCommit:
    """Committed two-passenger plan: fixed node sequence with drop-offs."""

    nodes: tuple[tuple[int, int], ...]
    dropoffs: dict[int, list[TripOnBoard]]


@dataclass
class VehicleSim:
    vid: int
    region: int
    slot: int
    trips: list[TripOnBoard]
    plan: RoutePlan | RideCommit | None = None
    cursor: int = 1
    inert: bool = False

    @property
    def mode(self) -> str:
        real = [t for t in self.trips if not t.virtual]
        if len(real) == 2:
            return "TwoOnBoard"
        if len(real) == 1:
            return "OneOnBoard"
        return "EmptyRoaming"

    def seat_free(self) -> bool:
        return len([t for t in self.trips if not t.virtual]) < 2


@dataclass
class EpisodeMetrics:
    scheme: str
    seed: int
    instance_id: str
    pickups: int = 0
    delivered: int = 0
    epochs: int = 0
    converged: bool = True
    pickup_log: list[tuple[int, int, int, int]] = field(default_factory=list)  # slot, vid, v, u
    per_vehicle: dict[int, int] = field(default_factory=dict)

    def row(self) -> list:
        return [self.scheme, self.seed, self.instance_id, self.pickups, self.epochs,
                int(self.converged)]


@dataclass
class SimContext:
    region_graph: RegionGraph
    demand: DemandModel
    feas: FeasibilityTable
    alpha: float
    K: int
    solver_config: SolverConfig = field(default_factory=SolverConfig)
    hotspot_window: int = 12
    hotspot_deadline_factor: float = 2.0
    allow_waiting: bool = False
    persist_lambda: bool = False


def select_hot_spot(ctx: SimContext, region: int, slot: int) -> tuple[int, int] | None:
    """Region with the largest expected request mass over the next window,
    ties to the nearest then lowest id; deadline scales the fastest time."""
    dist = ctx.region_graph.graph_times()[region]
    best = None
    for cand in range(ctx.region_graph.n):
        if cand == region or not math.isfinite(dist[cand]):
            continue
        mass = 0.0
        for h in range(1, ctx.hotspot_window + 1):
            t = slot + h
            if t >= ctx.demand.horizon:
                break
            mass += ctx.demand.expected_requests(t, cand)
        key = (-mass, dist[cand], cand)
        if best is None or key < best[0]:
            best = (key, cand)
    if best is None:
        return None
    cand = best[1]
    dl = int(math.ceil(round(ctx.hotspot_deadline_factor * dist[cand], 9)))
    return cand, max(1, dl)


# ---------------------------------------------------------------------------
# planners


class _PlannerBase:
    def __init__(self, ctx: SimContext):
        self.ctx = ctx
        self.cache: dict = {}

    def _state_key(self, vehicles: list[VehicleSim], t: int):
        return (t, tuple(
            (v.vid, v.region, v.trips[0].origin, v.trips[0].dest,
             v.trips[0].pickup_slot, v.trips[0].deadline, v.trips[0].virtual)
            for v in vehicles
        ))

    def _fastest_plan(self, vehicle: VehicleSim, t: int) -> RoutePlan:
        trip = vehicle.trips[0]
        path = self.ctx.region_graph.fastest_region_path(vehicle.region, trip.dest)
        if path is None:
            raise InputError(f"vehicle {vehicle.vid}: no region path to {trip.dest}")
        nodes = [(vehicle.region, t)]
        cur = vehicle.region
        when = t
        for nxt in path[1:]:
            delta = next(d for w, d in self.ctx.region_graph.out_edges(cur) if w == nxt)
            when += delta
            nodes.append((nxt, when))
            cur = nxt
        return RoutePlan(tuple(nodes), MappingProxyType({}), oblivious=True)


class FastestPlanner(_PlannerBase):
    """Demand-oblivious: every vehicle takes its fastest path and is always
    willing to pick up where feasible."""

    def plan(self, vehicles: list[VehicleSim], t: int) -> tuple[dict[int, RoutePlan], bool]:
        return {v.vid: self._fastest_plan(v, t) for v in vehicles}, True


class _OptimizingPlanner(_PlannerBase):
    """Shared machinery: build a solve for a set of vehicles, convert the
    report into route plans. Vehicles whose optimized route carries no
    assignment probability fall back to their fastest path."""

    def __init__(self, ctx: SimContext):
        super().__init__(ctx)
        self._lambda_store: dict = {}

    def _solve_group(self, vehicles: list[VehicleSim], t: int) -> tuple[dict[int, RoutePlan], bool]:
        ctx = self.ctx
        trips = [v.trips[0].spec for v in vehicles]
        for spec in trips:
            ctx.feas.add_trip(spec, ctx.region_graph)
        budgets = [v.trips[0].deadline - v.trips[0].elapsed(t) for v in vehicles]
        elapsed = [v.trips[0].elapsed(t) for v in vehicles]
        origins = [v.region for v in vehicles]
        problem = build_problem(
            ctx.region_graph, trips, budgets, elapsed, ctx.demand, ctx.feas,
            t_start=t, allow_waiting=ctx.allow_waiting, origins=origins,
        )
        warm = self._warm_lambda(problem, vehicles, t) if ctx.persist_lambda else None
        report = solve(problem, ctx.solver_config, warm_lambda=warm)
        if ctx.persist_lambda:
            self._store_lambda(problem, vehicles, report.final_lambda)

        y_entries = report.yprime_entries()
        plans: dict[int, RoutePlan] = {}
        for idx, veh in enumerate(vehicles):
            y = {(r, s, u, k): val for (i, r, s, u, k, val) in y_entries if i == idx}
            if not y:
                plans[veh.vid] = self._fastest_plan(veh, t)
            else:
                plans[veh.vid] = RoutePlan(tuple(report.route_regions(idx)), MappingProxyType(y))
        return plans, report.converged

    def _warm_lambda(self, problem, vehicles, t):
        lam = np.zeros((problem.n_vehicles, problem.n_cells))
        g = problem.graph
        for c, cell in enumerate(problem.cells):
            key_node = (g.node_region(cell.node), g.node_time(cell.node) + problem.t_start)
            for idx, veh in enumerate(vehicles):
                lam[idx, c] = self._lambda_store.get((veh.vid, key_node, cell.dest, cell.k), 0.0)
        return lam

    def _store_lambda(self, problem, vehicles, lam):
        if lam is None:
            return
        g = problem.graph
        for c, cell in enumerate(problem.cells):
            key_node = (g.node_region(cell.node), g.node_time(cell.node) + problem.t_start)
            for idx, veh in enumerate(vehicles):
                self._lambda_store[(veh.vid, key_node, cell.dest, cell.k)] = float(lam[idx, c])


class JointPlanner(_OptimizingPlanner):
    """Fleet-wide joint solve; realized requests go through the wheel."""

    def plan(self, vehicles: list[VehicleSim], t: int) -> tuple[dict[int, RoutePlan], bool]:
        key = self._state_key(vehicles, t)
        if key not in self.cache:
            self.cache[key] = self._solve_group(vehicles, t)
        return self.cache[key]


class IndependentPlanner(_OptimizingPlanner):
    """Each vehicle optimizes alone; conflicts resolve uniformly at random."""

    def plan(self, vehicles: list[VehicleSim], t: int) -> tuple[dict[int, RoutePlan], bool]:
        plans: dict[int, RoutePlan] = {}
        converged = True
        for veh in vehicles:
            key = self._state_key([veh], t)
            if key not in self.cache:
                self.cache[key] = self._solve_group([veh], t)
            solo_plans, ok = self.cache[key]
            plans.update(solo_plans)
            converged = converged and ok
        return plans, converged


def make_planner(scheme: str, ctx: SimContext):
    if scheme == "joint":
        return JointPlanner(ctx)
    if scheme == "independent":
        return IndependentPlanner(ctx)
    if scheme == "fastest":
        return FastestPlanner(ctx)
    raise InputError(f"unknown scheme {scheme!r}")


# ---------------------------------------------------------------------------
# episode loop


def _assignment_weight(vehicle: VehicleSim, v: int, u: int, k: int, t: int, ctx: SimContext, p: float) -> float:
    """Probability the vehicle takes one of the k realized (v, u) requests:
    min(y / p, z) at its current plan node, zero when ineligible."""
    plan = vehicle.plan
    if not isinstance(plan, RoutePlan) or not vehicle.seat_free() or vehicle.inert:
        return 0.0
    pos = vehicle.cursor - 1
    if pos < 1 or pos >= len(plan.nodes) - 1:
        return 0.0
    if vehicle.region != v or vehicle.slot != t:
        return 0.0
    trip = vehicle.trips[0]
    z = ctx.feas.z(trip.spec, trip.elapsed(t), v, u)
    if z == 0:
        return 0.0
    if plan.oblivious:
        return 1.0
    y = plan.y.get((v, t, u, k), 0.0)
    return min(y / p, 1.0)


def _deliver(vehicle: VehicleSim, trip: TripOnBoard, t: int, metrics: EpisodeMetrics,
             pending_initial: set, triggers: list) -> None:
    assert trip.elapsed(t) <= trip.deadline, (
        f"vehicle {vehicle.vid} missed a deadline: trip {trip} delivered at {t}"
    )
    vehicle.trips.remove(trip)
    if not trip.virtual:
        metrics.delivered += 1
    pending_initial.discard((vehicle.vid, trip.pickup_slot, trip.origin, trip.dest))
    triggers.append("delivery")


def _execute_pickup(vehicle: VehicleSim, v: int, u: int, t: int, ctx: SimContext,
                    metrics: EpisodeMetrics, pending_initial: set, triggers: list) -> None:
    dl = deadline(v, u, ctx.alpha, ctx.region_graph)
    assert dl is not None
    new_trip = TripOnBoard(v, u, t, dl)
    trip0 = vehicle.trips[0]
    if trip0.virtual:
        vehicle.trips = [new_trip]
        vehicle.plan = None
        triggers.append("empty-pickup")
    else:
        ride = ctx.feas.plan(trip0.spec, trip0.elapsed(t), v, u)
        assert ride is not None, "assigned without a stored feasible plan"
        vehicle.trips.append(new_trip)
        nodes = tuple((r, t + off) for r, off in zip(ride.nodes, ride.offsets))
        dropoffs: dict[int, list[TripOnBoard]] = {}
        dropoffs.setdefault(ride.new_dropoff_index, []).append(new_trip)
        dropoffs.setdefault(ride.onboard_dropoff_index, []).append(trip0)
        vehicle.plan = RideCommit(nodes, dropoffs)
        vehicle.cursor = 1
        # a drop-off at the pickup node itself happens immediately
        for trip in dropoffs.pop(0, []):
            _deliver(vehicle, trip, t, metrics, pending_initial, triggers)
    metrics.pickups += 1
    metrics.per_vehicle[vehicle.vid] = metrics.per_vehicle.get(vehicle.vid, 0) + 1
    metrics.pickup_log.append((t, vehicle.vid, v, u))


def _replan(vehicles: list[VehicleSim], t: int, ctx: SimContext, planner,
            metrics: EpisodeMetrics, pending_initial: set) -> None:
    """Re-plan every free vehicle that is currently at a node. Vehicles in the
    middle of a multi-slot edge keep their committed plan until they trigger
    again; two-passenger vehicles always keep their stored plan."""
    extra: list = []
    for veh in vehicles:
        if veh.inert or len(veh.trips) != 1 or veh.slot != t:
            continue
        if veh.trips[0].dest == veh.region:  # already at the destination: hand over now
            _deliver(veh, veh.trips[0], t, metrics, pending_initial, extra)
            veh.plan = None
    for veh in vehicles:
        if veh.inert or veh.trips or veh.slot != t:
            continue
        spot = select_hot_spot(ctx, veh.region, t)
        if spot is None:
            veh.inert = True
            veh.plan = None
            continue
        region, dl = spot
        veh.trips = [TripOnBoard(veh.region, region, t, dl, virtual=True)]
        veh.plan = None

    actives = [v for v in vehicles if not v.inert and len(v.trips) == 1 and v.slot == t]
    if actives:
        plans, converged = planner.plan(actives, t)
        for veh in actives:
            veh.plan = plans[veh.vid]
            veh.cursor = 1
        metrics.converged = metrics.converged and converged
    metrics.epochs += 1


def run_episode(
    instance: Instance,
    ctx: SimContext,
    scheme: str,
    seed: int,
    planner=None,
    horizon_cap: int | None = None,
) -> EpisodeMetrics:
    """Simulate one instance under one scheme. Deterministic given the seed."""
    if planner is None:
        planner = make_planner(scheme, ctx)
    rng = np.random.default_rng(seed)
    metrics = EpisodeMetrics(scheme=scheme, seed=seed, instance_id=instance.id)
    t0 = instance.start_slot

    vehicles = []
    for i, (s, d) in enumerate(zip(instance.sources, instance.destinations)):
        dl = deadline(s, d, ctx.alpha, ctx.region_graph)
        if s == d or dl is None:
            raise InputError(f"vehicle {i}: degenerate or unreachable trip ({s}, {d})")
        vehicles.append(VehicleSim(i, s, t0, [TripOnBoard(s, d, t0, dl)]))
    pending_initial = {(v.vid, t0, v.trips[0].origin, v.trips[0].dest) for v in vehicles}

    cap = ctx.demand.horizon - 1 if horizon_cap is None else horizon_cap
    end_at = None
    t = t0
    while t <= cap:
        triggers: list = []
        if t > t0:
            # arrivals and deliveries along committed plans
            for veh in vehicles:
                plan = veh.plan
                if plan is None or veh.cursor >= len(plan.nodes):
                    continue
                region, when = plan.nodes[veh.cursor]
                if when != t:
                    continue
                veh.region, veh.slot = region, t
                pos = veh.cursor
                veh.cursor += 1
                if isinstance(plan, RideCommit):
                    for trip in plan.dropoffs.get(pos, []):
                        _deliver(veh, trip, t, metrics, pending_initial, triggers)
                if pos == len(plan.nodes) - 1:
                    if isinstance(plan, RoutePlan) and veh.trips:
                        _deliver(veh, veh.trips[0], t, metrics, pending_initial, triggers)
                    veh.plan = None

            # demand realization and assignment
            for (v, u), k in sorted(sample_realization(ctx.demand, t, rng).items()):
                p = ctx.demand.prob(t, v, u, k)
                q_vec = np.array([_assignment_weight(veh, v, u, k, t, ctx, p) for veh in vehicles])
                if scheme == "joint":
                    # one wheel draw per event; skipped when nobody contends so
                    # the random stream matches the per-vehicle scheme at N=1
                    if q_vec.max(initial=0.0) > 0:
                        wheel = build_wheel(q_vec * p, p, (q_vec > 0).astype(float), k)
                        chosen = sorted(draw(wheel, rng))
                    else:
                        chosen = []
                else:
                    willing = [veh.vid for veh, q in zip(vehicles, q_vec)
                               if q > 0 and rng.random() < q]
                    if len(willing) > k:
                        order = rng.permutation(len(willing))
                        chosen = sorted(willing[j] for j in order[:k])
                    else:
                        chosen = willing
                for vid in chosen:
                    _execute_pickup(vehicles[vid], v, u, t, ctx, metrics, pending_initial, triggers)

        if t == t0 or triggers:
            _replan(vehicles, t, ctx, planner, metrics, pending_initial)

        if not pending_initial and end_at is None:
            end_at = t + 1
        if end_at is not None and t >= end_at:
            break
        t += 1
    return metrics


# ---------------------------------------------------------------------------
# sweeps

def _episode_batch(args):
    ctx, instance, scheme, seeds, cap = args
    planner = make_planner(scheme, ctx)
    return [run_episode(instance, ctx, scheme, s, planner=planner, horizon_cap=cap) for s in seeds]


def run_comparison(
    ctx: SimContext,
    instances: list[Instance],
    schemes: list[str],
    seeds: list[int],
    horizon_cap: int | None = None,
    threads: int | None = None,
) -> list[EpisodeMetrics]:
    """Run every (instance, scheme, seed) episode; deterministic result order.

    Thread count comes from the RIDEPOOL_THREADS environment variable when not
    given; plans are memoized per (instance, scheme) worker."""
    if threads is None:
        threads = int(os.environ.get("RIDEPOOL_THREADS", "1"))
    jobs = []
    for instance in instances:
        for scheme in schemes:
            jobs.append((ctx, instance, scheme, list(seeds), horizon_cap))
    results: list[EpisodeMetrics] = []
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for batch in pool.map(_episode_batch, jobs):
                results.extend(batch)
    else:
        for job in jobs:
            results.extend(_episode_batch(job))
    results.sort(key=lambda m: (m.instance_id, m.scheme, m.seed))
    return results


def summarize(metrics: list[EpisodeMetrics]) -> list[dict]:
    """Mean pickups and a 95% normal-approximation interval per scheme."""
    rows = []
    by_scheme: dict[str, list[int]] = {}
    for m in metrics:
        by_scheme.setdefault(m.scheme, []).append(m.pickups)
    for scheme in sorted(by_scheme):
        vals = np.array(by_scheme[scheme], dtype=float)
        mean = float(vals.mean())
        if len(vals) > 1:
            half = 1.96 * float(vals.std(ddof=1)) / math.sqrt(len(vals))
        else:
            half = 0.0
        rows.append({
            "scheme": scheme,
            "episodes": len(vals),
            "mean_pickups": mean,
            "ci95_low": mean - half,
            "ci95_high": mean + half,
        })
    return rows
