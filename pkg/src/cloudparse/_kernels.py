"""Compiled inner loops for the parser: Viterbi passes and the nearest-chain
grid lookup.  Each kernel performs the same floating-point operations in the
same order as the vectorised reference code, so results agree bit for bit."""

import math

import numpy as np
from numba import njit

NONE = -1


@njit(cache=True)
def viterbi(unary, pairwise, first_cost, use_first):
    """Open-chain Viterbi; ties resolve to the smaller label.

    ``pairwise[i, a, b]`` links label ``a`` at ``i - 1`` to label ``b`` at ``i``.
    """
    n, L = unary.shape
    cost = np.empty(L)
    new = np.empty(L)
    back = np.zeros((n, L), dtype=np.int64)
    for b in range(L):
        cost[b] = first_cost[b] if use_first else unary[0, b]
    for i in range(1, n):
        for b in range(L):
            best = cost[0] + pairwise[i, 0, b]
            arg = 0
            for a in range(1, L):
                t = cost[a] + pairwise[i, a, b]
                if t < best:
                    best = t
                    arg = a
            back[i, b] = arg
            new[b] = best + unary[i, b]
        cost[:] = new
    labels = np.empty(n, dtype=np.int64)
    last = 0
    for b in range(1, L):
        if cost[b] < cost[last]:
            last = b
    labels[n - 1] = last
    for i in range(n - 1, 0, -1):
        labels[i - 1] = back[i, labels[i]]
    return labels, cost[last]


@njit(cache=True)
def viterbi_chain_terms(table, alpha, gamma, disp, delta, lo, hi, labels):
    """Viterbi over landmarks ``lo..hi-1`` with the pairwise term
    ``gamma_i (d - d')^2 - delta [same chain]`` built on the fly."""
    n = hi - lo
    L = disp.shape[0]
    d2 = disp * disp
    cost = np.empty(L)
    new = np.empty(L)
    back = np.zeros((n, L), dtype=np.int64)
    for b in range(L):
        cost[b] = alpha[lo] * d2[b]
    for j in range(1, n):
        i = lo + j
        g = gamma[i]
        for b in range(L):
            tb = table[i, b]
            best = 0.0
            arg = -1
            for a in range(L):
                diff = disp[a] - disp[b]
                same = 1.0 if (tb != NONE and table[i - 1, a] == tb) else 0.0
                t = cost[a] + (g * (diff * diff) - delta * same)
                if arg < 0 or t < best:
                    best = t
                    arg = a
            back[j, b] = arg
            new[b] = best + alpha[i] * d2[b]
        cost[:] = new
    last = 0
    for b in range(1, L):
        if cost[b] < cost[last]:
            last = b
    labels[hi - 1] = last
    for j in range(n - 1, 0, -1):
        labels[lo + j - 1] = back[j, labels[lo + j]]


@njit(cache=True)
def grid_lookup(grid, ox, oy, pts, tol):
    """Chain id of the nearest set grid cell within ``tol`` of each point.

    ``grid[y - oy, x - ox]`` holds the smallest chain id at pixel ``(x, y)``
    or ``NONE``.  Equidistant hits resolve to the smaller id.
    """
    h, w = grid.shape
    r = int(math.ceil(tol))
    lim = tol + 1e-9
    m = pts.shape[0]
    out = np.full(m, NONE, dtype=np.int64)
    for k in range(m):
        px = pts[k, 0]
        py = pts[k, 1]
        if not (math.isfinite(px) and math.isfinite(py)):
            continue
        bx = int(math.floor(px)) - ox
        by = int(math.floor(py)) - oy
        best = math.inf
        best_id = NONE
        for cy in range(by - r, by + r + 2):
            if cy < 0 or cy >= h:
                continue
            for cx in range(bx - r, bx + r + 2):
                if cx < 0 or cx >= w:
                    continue
                cid = grid[cy, cx]
                if cid == NONE:
                    continue
                dx = cx + ox - px
                dy = cy + oy - py
                dist = math.sqrt(dx * dx + dy * dy)
                if dist > lim:
                    continue
                if dist < best - 1e-12:
                    best = dist
                    best_id = cid
                elif dist <= best + 1e-12 and cid < best_id:
                    best = min(best, dist)
                    best_id = cid
        out[k] = best_id
    return out
