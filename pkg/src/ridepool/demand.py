"""Time-dependent travel-request distributions and their empirical estimation.

A demand model stores, per slot t and ordered region pair (v, u), the
probability that exactly k requests appear (1 <= k <= K). The no-request
mass is implicit: p(k=0) = 1 - sum_k p(k). Slot t covers minutes
[t * slot_minutes, (t+1) * slot_minutes) of the day.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import InputError

_TOL = 1e-9


@dataclass(frozen=True)
class TripRecord:
    day: str
    pickup_slot: int
    pickup_region: int
    dropoff_region: int


class DemandModel:
    def __init__(self, horizon: int, K: int, cells: dict[tuple[int, int, int], np.ndarray]):
        if horizon < 1 or K < 1:
            raise InputError("horizon and K must be positive")
        self.horizon = horizon
        self.K = K
        self._cells: dict[tuple[int, int, int], np.ndarray] = {}
        for key, probs in sorted(cells.items()):
            arr = np.asarray(probs, dtype=float)
            if arr.shape != (K,):
                raise InputError(f"cell {key}: expected {K} probabilities")
            if (arr < -_TOL).any() or (arr > 1 + _TOL).any():
                raise InputError(f"cell {key}: probabilities outside [0, 1]")
            if arr.sum() > 1 + _TOL:
                raise InputError(f"cell {key}: probabilities sum to more than 1")
            t, v, u = key
            if not 0 <= t < horizon:
                raise InputError(f"cell {key}: slot outside horizon")
            if v == u:
                raise InputError(f"cell {key}: same-region demand is not modeled")
            if arr.any():
                self._cells[key] = np.clip(arr, 0.0, 1.0)

    def prob(self, t: int, v: int, u: int, k: int) -> float:
        arr = self._cells.get((t, v, u))
        if arr is None or not 1 <= k <= self.K:
            return 0.0
        return float(arr[k - 1])

    def cell(self, t: int, v: int, u: int) -> np.ndarray | None:
        return self._cells.get((t, v, u))

    def cells_at(self, t: int):
        """Yield ((v, u), probs) for every nonzero cell of slot t, sorted."""
        for (ct, v, u), arr in self._cells.items():
            if ct == t:
                yield (v, u), arr

    def cells_in_window(self, t0: int, t1: int):
        """Yield ((t, v, u), probs) with t0 <= t <= t1, sorted."""
        for (t, v, u), arr in self._cells.items():
            if t0 <= t <= t1:
                yield (t, v, u), arr

    def expected_requests(self, t: int, v: int) -> float:
        """Expected number of requests appearing in region v at slot t."""
        total = 0.0
        for (ct, cv, _u), arr in self._cells.items():
            if ct == t and cv == v:
                total += float((arr * np.arange(1, self.K + 1)).sum())
        return total

    def to_json_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "K": self.K,
            "cells": [
                {"t": t, "v": v, "u": u, "p": [float(x) for x in arr]}
                for (t, v, u), arr in self._cells.items()
            ],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "DemandModel":
        cells = {(c["t"], c["v"], c["u"]): np.array(c["p"]) for c in data["cells"]}
        return cls(data["horizon"], data["K"], cells)

    def content_hash(self) -> str:
        blob = json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def estimate_empirical(
    records: list[TripRecord],
    num_days: int,
    horizon: int,
    K: int,
    n_regions: int | None = None,
) -> DemandModel:
    """Per-cell probabilities as day-count ratios: p(t,v,u,k) is the fraction
    of days on which exactly k requests from v to u appeared in slot t.
    Daily counts above K are clamped to K."""
    if num_days < 1:
        raise InputError("num_days must be at least 1")
    counts: dict[tuple[int, int, int], dict[str, int]] = {}
    for i, rec in enumerate(records):
        if rec.pickup_region == rec.dropoff_region:
            continue
        if not 0 <= rec.pickup_slot < horizon:
            raise InputError(f"record {i}: pickup slot {rec.pickup_slot} outside horizon")
        if n_regions is not None and not (
            0 <= rec.pickup_region < n_regions and 0 <= rec.dropoff_region < n_regions
        ):
            raise InputError(f"record {i}: unknown region id")
        key = (rec.pickup_slot, rec.pickup_region, rec.dropoff_region)
        per_day = counts.setdefault(key, {})
        per_day[rec.day] = per_day.get(rec.day, 0) + 1

    cells = {}
    for key, per_day in counts.items():
        probs = np.zeros(K)
        for day_count in per_day.values():
            probs[min(day_count, K) - 1] += 1
        cells[key] = probs / num_days
    return DemandModel(horizon, K, cells)


def sample_realization(model: DemandModel, slot: int, rng) -> dict[tuple[int, int], int]:
    """Draw one independent realization per (v, u) cell of the given slot.

    Returns the nonzero counts only. ``rng`` is a seed or an existing
    numpy Generator; a given seed always yields the same draw.
    """
    if not 0 <= slot < model.horizon:
        raise InputError(f"slot {slot} outside horizon")
    gen = np.random.default_rng(rng)
    out: dict[tuple[int, int], int] = {}
    for (v, u), arr in model.cells_at(slot):
        r = gen.random()
        # thresholds = [P(0), P(0)+p(1), ..., 1]; index of the first one above r is k
        thresholds = np.cumsum(np.concatenate(([1.0 - arr.sum()], arr)))
        k = min(int(np.searchsorted(thresholds, r, side="right")), model.K)
        if k > 0:
            out[(v, u)] = k
    return out


def load_trip_records(path: str, n_regions: int | None = None) -> list[TripRecord]:
    """Read trip traces from CSV with header day,pickup_slot,pickup_region,dropoff_region.

    Same-region trips are dropped: they carry no routing content."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = ["day", "pickup_slot", "pickup_region", "dropoff_region"]
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != required:
            raise InputError(f"{path}: expected header {','.join(required)}")
        for i, row in enumerate(reader, start=2):
            try:
                rec = TripRecord(
                    day=row["day"].strip(),
                    pickup_slot=int(row["pickup_slot"]),
                    pickup_region=int(row["pickup_region"]),
                    dropoff_region=int(row["dropoff_region"]),
                )
            except (TypeError, ValueError, AttributeError) as exc:
                raise InputError(f"{path}: bad row {i}: {exc}") from exc
            if n_regions is not None and not (
                0 <= rec.pickup_region < n_regions and 0 <= rec.dropoff_region < n_regions
            ):
                raise InputError(f"{path}: row {i}: unknown region id")
            if rec.pickup_region != rec.dropoff_region:
                records.append(rec)
    return records
