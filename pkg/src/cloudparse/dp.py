"""Exact minimisation of chain-structured label energies by dynamic
programming."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import EnergyParams
from . import _kernels as _k
from .energy import NONE, ChainMembershipIndex


@dataclass(frozen=True)
class DpProblem:
    """``sum_i unary[i, l_i] + sum_{i not a segment start} pairwise[i, l_{i-1}, l_i]``.

    In closed mode ``pairwise[start]`` of each segment holds the wrap-around
    cost ``[l_last, l_first]``.
    """

    unary: np.ndarray  # (N, L)
    pairwise: np.ndarray  # (N, L, L)
    segment_starts: tuple[int, ...] = (0,)
    closed: bool = False

    def __post_init__(self):
        n, L = self.unary.shape
        if L < 1:
            raise ValueError("need at least one label")
        if self.pairwise.shape != (n, L, L):
            raise ValueError("pairwise must have shape (N, L, L)")

    @property
    def n(self) -> int:
        return self.unary.shape[0]

    @property
    def n_labels(self) -> int:
        return self.unary.shape[1]

    def segments(self):
        b = list(self.segment_starts) + [self.n]
        return list(zip(b[:-1], b[1:]))

    def energy(self, labels) -> float:
        labels = np.asarray(labels, dtype=int)
        e = 0.0
        for lo, hi in self.segments():
            for i in range(lo, hi):
                e += self.unary[i, labels[i]]
                if i > lo:
                    e += self.pairwise[i, labels[i - 1], labels[i]]
            if self.closed and hi - lo > 2:
                e += self.pairwise[lo, labels[hi - 1], labels[lo]]
        return float(e)


def build_dp_problem(idx: ChainMembershipIndex, params: EnergyParams, closed=False) -> DpProblem:
    """Unary ``alpha_i d^2``; pairwise ``gamma_i (d - d')^2`` minus ``delta``
    when both ends snap to the same chain."""
    deform = params.deform
    d = deform.displacements()
    n, L = idx.table.shape
    unary = deform.alpha[:, None] * d[None, :] ** 2
    diff2 = (d[:, None] - d[None, :]) ** 2
    t = idx.table
    prev = np.roll(t, 1, axis=0)
    if closed:
        # each segment start pairs with its own segment's last landmark
        bounds = list(idx.segment_starts) + [n]
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            prev[lo] = t[hi - 1]
    same = (prev[:, :, None] == t[:, None, :]) & (t[:, None, :] != NONE)
    gamma = deform.gamma.copy()
    if closed:
        bounds = list(idx.segment_starts) + [n]
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            gamma[lo] = deform.gamma[lo + 1] if hi - lo > 1 else 0.0
    else:
        gamma[list(idx.segment_starts)] = 0.0
    pairwise = gamma[:, None, None] * diff2[None] - params.delta * same
    if not closed:
        pairwise[list(idx.segment_starts)] = 0.0
    return DpProblem(unary, pairwise, idx.segment_starts, closed)


def _chain_dp(unary, pairwise, first_cost=None):
    """Viterbi over one open chain.  ``first_cost`` optionally replaces the
    first node's unary.  Returns ``(labels, cost)``; ties go to the smaller
    label."""
    unary = np.ascontiguousarray(unary, dtype=float)
    pairwise = np.ascontiguousarray(pairwise, dtype=float)
    use_first = first_cost is not None
    first = np.ascontiguousarray(first_cost if use_first else unary[0], dtype=float)
    labels, cost = _k.viterbi(unary, pairwise, first, use_first)
    return labels, float(cost)


def solve_dp(problem: DpProblem) -> tuple[np.ndarray, float]:
    """Global minimiser of the problem energy, solved segment by segment."""
    labels = np.empty(problem.n, dtype=np.int64)
    for lo, hi in problem.segments():
        un = problem.unary[lo:hi]
        pw = problem.pairwise[lo:hi]
        if not problem.closed or hi - lo <= 2:
            labels[lo:hi], _ = _chain_dp(un, pw)
            continue
        # condition on the first label; the wrap edge is folded into the last node
        best = None
        L = problem.n_labels
        wrap = problem.pairwise[lo]
        for l0 in range(L):
            first = np.full(L, np.inf)
            first[l0] = un[0, l0]
            last_un = un.copy()
            last_un[-1] = un[-1] + wrap[:, l0]
            lab, c = _chain_dp(last_un, pw, first)
            if best is None or c < best[1]:
                best = (lab, c)
        labels[lo:hi] = best[0]
    return labels, problem.energy(labels)


def solve_membership_dp(idx: ChainMembershipIndex, params: EnergyParams) -> np.ndarray:
    """Labels minimising the open-contour energy of ``build_dp_problem(idx,
    params)`` without materialising the ``(N, L, L)`` pairwise table."""
    deform = params.deform
    table = np.ascontiguousarray(idx.table, dtype=np.int64)
    labels = np.empty(table.shape[0], dtype=np.int64)
    bounds = list(idx.segment_starts) + [table.shape[0]]
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        _k.viterbi_chain_terms(table, deform.alpha, deform.gamma, deform.displacements(),
                               float(params.delta), lo, hi, labels)
    return labels


def dp_complexity_guard(problem: DpProblem) -> tuple[int, int]:
    """``(states, transitions)`` = ``(N L, (N - #segments) L^2)``."""
    n, L = problem.n, problem.n_labels
    return n * L, (n - len(problem.segment_starts)) * L * L
