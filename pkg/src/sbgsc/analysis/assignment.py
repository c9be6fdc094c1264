"""Exact linear assignment by shortest augmenting paths.

Both kernels implement the Jonker-Volgenant style successive shortest path
method on a dense square cost matrix: one Dijkstra-like search per row over
reduced costs, followed by a dual update and augmentation.  ``_sap_numba`` is
the compiled loop version; ``_sap_numpy`` vectorises the inner column scan.
"""

from __future__ import annotations

import numpy as np

from .._accel import USE_NUMBA, njit


@njit(cache=True)
def _sap_numba(cost):
    n = cost.shape[0]
    u = np.zeros(n)
    v = np.zeros(n)
    shortest = np.empty(n)
    path = np.empty(n, dtype=np.int64)
    col4row = np.full(n, -1, dtype=np.int64)
    row4col = np.full(n, -1, dtype=np.int64)
    scanned_row = np.zeros(n, dtype=np.bool_)
    scanned_col = np.zeros(n, dtype=np.bool_)
    for cur in range(n):
        shortest[:] = np.inf
        path[:] = -1
        scanned_row[:] = False
        scanned_col[:] = False
        i = cur
        min_val = 0.0
        sink = -1
        while sink == -1:
            scanned_row[i] = True
            lowest = np.inf
            best = -1
            for j in range(n):
                if scanned_col[j]:
                    continue
                r = min_val + cost[i, j] - u[i] - v[j]
                if r < shortest[j]:
                    path[j] = i
                    shortest[j] = r
                if shortest[j] < lowest or (shortest[j] == lowest and row4col[j] == -1):
                    lowest = shortest[j]
                    best = j
            min_val = lowest
            j = best
            scanned_col[j] = True
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]
        u[cur] += min_val
        for r in range(n):
            if scanned_row[r] and r != cur:
                u[r] += min_val - shortest[col4row[r]]
        for c in range(n):
            if scanned_col[c]:
                v[c] -= min_val - shortest[c]
        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            nxt = col4row[i]
            col4row[i] = j
            j = nxt
            if i == cur:
                break
    return col4row


def _sap_numpy(cost):
    n = cost.shape[0]
    u = np.zeros(n)
    v = np.zeros(n)
    col4row = np.full(n, -1, dtype=np.int64)
    row4col = np.full(n, -1, dtype=np.int64)
    for cur in range(n):
        shortest = np.full(n, np.inf)
        path = np.full(n, -1, dtype=np.int64)
        scanned_row = np.zeros(n, dtype=bool)
        scanned_col = np.zeros(n, dtype=bool)
        i = cur
        min_val = 0.0
        sink = -1
        while sink == -1:
            scanned_row[i] = True
            free = ~scanned_col
            r = min_val + cost[i] - u[i] - v
            better = free & (r < shortest)
            path[better] = i
            shortest[better] = r[better]
            cand = np.where(free, shortest, np.inf)
            lowest = cand.min()
            ties = np.flatnonzero(cand == lowest)
            unassigned = ties[row4col[ties] == -1]
            j = int(unassigned[0]) if unassigned.size else int(ties[0])
            min_val = lowest
            scanned_col[j] = True
            if row4col[j] == -1:
                sink = j
            else:
                i = int(row4col[j])
        u[cur] += min_val
        rows = np.flatnonzero(scanned_row)
        rows = rows[rows != cur]
        u[rows] += min_val - shortest[col4row[rows]]
        v[scanned_col] -= min_val - shortest[scanned_col]
        j = sink
        while True:
            i = int(path[j])
            row4col[j] = i
            col4row[i], j = j, int(col4row[i])
            if i == cur:
                break
    return col4row


def linear_assignment(cost, use_numba: bool | None = None) -> np.ndarray:
    """Column index assigned to each row minimising the total cost.

    ``use_numba`` overrides the package-wide switch (used by the benchmark and
    the cross-implementation tests).
    """
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got {cost.shape}")
    if cost.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    jit = USE_NUMBA if use_numba is None else use_numba
    return _sap_numba(cost) if jit else _sap_numpy(cost)
