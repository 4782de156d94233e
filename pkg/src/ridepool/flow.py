"""Maximum-profit bipartite flow with real capacities.

Network: source -> row i (capacity budgets[i]) -> column c (per-arc profit
and optional per-arc cap) -> sink (capacity caps[c]). Flow is not required
to be maximal; we augment along the most profitable source-sink path of the
residual network until none has positive profit, which is exactly optimal
for this transportation-polytope LP. Label correcting (Bellman-Ford style)
handles the negative reverse arcs; the invariant that no positive-profit
residual cycle exists keeps it finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_EPS = 1e-12


@dataclass(frozen=True)
class Arc:
    row: int
    col: int
    profit: float
    upper: float  # per-arc cap, inf if only budgets/caps bind


def solve_transport(
    arcs: list[Arc],
    budgets: np.ndarray,
    caps: np.ndarray,
) -> tuple[dict[tuple[int, int], float], float]:
    """Maximize sum(profit * flow) subject to row budgets, column caps and
    per-arc upper bounds. Returns (flow by (row, col), objective value)."""
    n_rows = len(budgets)
    n_cols = len(caps)
    flow: dict[tuple[int, int], float] = {}
    row_used = np.zeros(n_rows)
    col_used = np.zeros(n_cols)
    arcs = [a for a in arcs if a.profit > _EPS and a.upper > _EPS]

    max_augment = len(arcs) + n_rows + n_cols + 8
    for _ in range(max_augment * 4):
        dist_r = np.where(budgets - row_used > _EPS, 0.0, -np.inf)
        dist_c = np.full(n_cols, -np.inf)
        par_r = np.full(n_rows, -2, dtype=int)  # -1 = source, >=0 = column index
        par_c = np.full(n_cols, -2, dtype=int)
        par_r[dist_r == 0.0] = -1

        for _round in range(n_rows + n_cols + 2):
            changed = False
            for a in arcs:
                cur = flow.get((a.row, a.col), 0.0)
                # forward: row -> col while below the arc cap
                if cur < a.upper - _EPS and dist_r[a.row] > -np.inf:
                    cand = dist_r[a.row] + a.profit
                    if cand > dist_c[a.col] + _EPS:
                        dist_c[a.col] = cand
                        par_c[a.col] = a.row
                        changed = True
                # backward: col -> row while positive flow can be pushed back
                if cur > _EPS and dist_c[a.col] > -np.inf:
                    cand = dist_c[a.col] - a.profit
                    if cand > dist_r[a.row] + _EPS:
                        dist_r[a.row] = cand
                        par_r[a.row] = a.col
                        changed = True
            if not changed:
                break

        best_col = -1
        best = _EPS
        for c in range(n_cols):
            if caps[c] - col_used[c] > _EPS and dist_c[c] > best:
                best = dist_c[c]
                best_col = c
        if best_col < 0:
            break

        # walk parents back to the source, collecting the alternating path
        path: list[tuple[int, int, bool]] = []  # (row, col, forward?)
        col = best_col
        while True:
            row = par_c[col]
            path.append((row, col, True))
            prev = par_r[row]
            if prev == -1:
                break
            path.append((row, prev, False))
            col = prev

        first_row = path[-1][0]
        bottleneck = min(budgets[first_row] - row_used[first_row], caps[best_col] - col_used[best_col])
        arc_by_pair = {(a.row, a.col): a for a in arcs}
        for row, col, forward in path:
            cur = flow.get((row, col), 0.0)
            if forward:
                bottleneck = min(bottleneck, arc_by_pair[(row, col)].upper - cur)
            else:
                bottleneck = min(bottleneck, cur)
        if bottleneck <= _EPS:
            break
        for row, col, forward in path:
            flow[(row, col)] = flow.get((row, col), 0.0) + (bottleneck if forward else -bottleneck)
        row_used[first_row] += bottleneck
        col_used[best_col] += bottleneck
    else:
        raise RuntimeError("augmenting-path iteration cap exceeded; flow did not terminate")

    value = 0.0
    arc_profit = {(a.row, a.col): a.profit for a in arcs}
    for pair, x in list(flow.items()):
        if x <= _EPS:
            del flow[pair]
        else:
            value += arc_profit[pair] * x
    return flow, value
