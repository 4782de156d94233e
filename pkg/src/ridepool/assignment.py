"""Request-vehicle assignment probabilities and their realization.

An assignment vector y maps (vehicle, slot, origin, dest, count) to the
probability of the joint event "k requests appear and one is assigned to
this vehicle". Feasible vectors satisfy, index-wise,

    y <= p,    0 <= y <= z,    sum over vehicles of y <= k * p.

Feasible vectors are realizable exactly by the interval wheel: each vehicle
gets an arc of length q_i = min(y_i / p, z_i) on the unit circle, arcs laid
end to end with wrap-around; a single uniform draw assigns every vehicle
whose arc covers it. At most ceil(sum q) <= k vehicles are hit and each
vehicle is hit with probability exactly q_i.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError

_TOL = 1e-9

# y is keyed (vehicle, slot, origin, dest, k); absent means zero
AssignmentKey = tuple[int, int, int, int, int]


@dataclass
class AssignmentVector:
    y: dict[AssignmentKey, float]

    def get(self, key: AssignmentKey) -> float:
        return self.y.get(key, 0.0)

    def vehicle_slice(self, vehicle: int) -> dict[tuple[int, int, int, int], float]:
        return {k[1:]: val for k, val in self.y.items() if k[0] == vehicle}


def pickup_probability(y_vehicle: dict[tuple[int, int, int, int], float]) -> dict[tuple[int, int], float]:
    """Per (origin, slot): probability the vehicle is assigned any request there,
    1 - prod over destinations of (1 - sum over k of y)."""
    sums: dict[tuple[int, int, int], float] = {}
    for (t, v, u, _k), val in y_vehicle.items():
        sums[(v, t, u)] = sums.get((v, t, u), 0.0) + val
    prods: dict[tuple[int, int], float] = {}
    for (v, t, u) in sorted(sums):
        s = sums[(v, t, u)]
        if s < -_TOL or s > 1 + _TOL:
            raise InputError(f"aggregate assignment probability {s} outside [0, 1] at {(v, t, u)}")
        prods[(v, t)] = prods.get((v, t), 1.0) * (1.0 - min(max(s, 0.0), 1.0))
    return {key: 1.0 - prod for key, prod in prods.items()}


def validate(y: AssignmentVector, prob, z) -> list[tuple[str, tuple]]:
    """Check the three feasibility conditions; empty list means feasible.

    ``prob(t, v, u, k)`` and ``z(vehicle, t, v, u)`` are lookup callables.
    Returns (constraint id, index) pairs for every violation.
    """
    violations: list[tuple[str, tuple]] = []
    fleet_totals: dict[tuple[int, int, int, int], float] = {}
    for key in sorted(y.y):
        i, t, v, u, k = key
        val = y.y[key]
        p = prob(t, v, u, k)
        if val > p + _TOL:
            violations.append(("demand-bound", key))
        if val < -_TOL or val > z(i, t, v, u) + _TOL:
            violations.append(("feasibility-bound", key))
        cell = (t, v, u, k)
        fleet_totals[cell] = fleet_totals.get(cell, 0.0) + val
    for cell in sorted(fleet_totals):
        t, v, u, k = cell
        if fleet_totals[cell] > k * prob(t, v, u, k) + _TOL:
            violations.append(("fleet-bound", cell))
    return violations


@dataclass
class WheelLayout:
    """Circle arcs realizing per-vehicle assignment probabilities.

    ``q[i]`` is the arc length; ``intervals[i]`` is either None (empty),
    ("full",) for the whole circle, or ("arc", lo, hi) with wrap when lo >= hi.
    """

    q: np.ndarray
    anchors: np.ndarray
    intervals: list[tuple | None]
    k: int

    def covers(self, i: int, eta: float) -> bool:
        iv = self.intervals[i]
        if iv is None:
            return False
        if iv[0] == "full":
            return True
        _tag, lo, hi = iv
        if lo < hi:
            return lo <= eta < hi
        return eta >= lo or eta < hi

    def to_json_dict(self) -> dict:
        return {
            "q": [float(x) for x in self.q],
            "anchors": [float(x) for x in self.anchors],
            "intervals": [list(iv) if iv else None for iv in self.intervals],
            "k": self.k,
        }


def build_wheel(y_slice: np.ndarray, p: float, z_slice: np.ndarray, k: int) -> WheelLayout:
    """Lay out arcs for one (slot, origin, dest, k) event over all vehicles,
    ascending vehicle id. q_i = min(y_i / p, z_i)."""
    y_arr = np.asarray(y_slice, dtype=float)
    z_arr = np.asarray(z_slice, dtype=float)
    if p <= 0:
        if (y_arr > 0).any():
            raise InputError("positive assignment probability on a zero-probability cell")
        p = 1.0  # all q become 0
    q = np.minimum(y_arr / p, z_arr)
    if (q < -_TOL).any() or (q > 1 + _TOL).any():
        raise InputError("assignment ratios outside [0, 1]")
    q = np.clip(q, 0.0, 1.0)

    anchors = np.zeros(len(q) + 1)
    intervals: list[tuple | None] = []
    a_prev = 0.0
    for i, qi in enumerate(q):
        a = a_prev + qi
        if a > 1:
            a -= 1.0
        anchors[i + 1] = a
        if a != a_prev:
            intervals.append(("arc", a_prev, a))  # lo >= hi encodes the wrap past 1
        else:
            # equal anchors occur only for arc length 0 or 1; tolerate float dust
            if qi <= _TOL:
                intervals.append(None)
            elif qi >= 1 - _TOL:
                intervals.append(("full",))
            else:
                raise InputError(f"degenerate wheel interval for vehicle {i} with q={qi}")
        a_prev = a
    return WheelLayout(q=q, anchors=anchors, intervals=intervals, k=k)


def draw(wheel: WheelLayout, rng) -> set[int]:
    """One uniform draw; returns the ids of all vehicles whose arc covers it."""
    gen = np.random.default_rng(rng)
    eta = float(gen.random())
    return {i for i in range(len(wheel.q)) if wheel.covers(i, eta)}


def draw_many(wheel: WheelLayout, n_draws: int, rng) -> np.ndarray:
    """Vectorized draws: boolean matrix (n_draws, n_vehicles)."""
    gen = np.random.default_rng(rng)
    etas = gen.random(n_draws)
    hits = np.zeros((n_draws, len(wheel.q)), dtype=bool)
    for i, iv in enumerate(wheel.intervals):
        if iv is None:
            continue
        if iv[0] == "full":
            hits[:, i] = True
        else:
            _tag, lo, hi = iv
            if lo < hi:
                hits[:, i] = (etas >= lo) & (etas < hi)
            else:
                hits[:, i] = (etas >= lo) | (etas < hi)
    return hits
