"""Data-driven PCA hypotheses from one (CG1) or two (CG2) contour fragments.

CG1 fits every contour fragment, in both orientations, to every run of
consecutive model landmarks whose count is plausible for the fragment
length.  CG2 takes each CG1 candidate and adds a second fragment lying near
a different part of the candidate shape.  Both finish with greedy
non-maximum suppression on the average point-to-point distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import CgParams, TransformPriorParams
from .geometry import SimilarityTransform, avg_point_error
from .shape_model import (PcaInstance, PcaShapeModel, _invert_ab, fit_weighted_pca,
                          model_frame_points, prior_transform, solve_similarity,
                          synthesize)


@dataclass(frozen=True)
class MatchRecord:
    inst: PcaInstance
    fragment_id: int
    b: int  # first matched landmark, 0-based
    k: int  # number of matched landmarks
    fit_error: float
    reverse: bool = False  # fragment points run against landmark order
    second: tuple | None = None  # (fragment_id, j, m, reverse) for CG2 refinements

    def to_json(self) -> dict:
        d = {"A": self.inst.A.as_dict(), "beta": self.inst.beta.tolist(),
             "fragment_id": self.fragment_id, "b": self.b, "k": self.k,
             "fit_error": self.fit_error}
        if self.second is not None:
            d["second"] = list(self.second)
        return d


@dataclass(frozen=True)
class LengthIntervalTable:
    """Landmark-count interval ``[L(l), U(l)]`` for fragments of length ``l``."""

    centers: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    bin_width: float = 5.0

    def interval(self, length: float) -> tuple[int, int]:
        j = int(round((length - self.centers[0]) / self.bin_width))
        j = min(max(j, 0), self.centers.size - 1)
        return int(self.lower[j]), int(self.upper[j])

    def to_json(self) -> dict:
        return {"bin_width": self.bin_width,
                "bins": [[float(c), int(lo), int(hi)]
                         for c, lo, hi in zip(self.centers, self.lower, self.upper)]}

    @classmethod
    def from_json(cls, d) -> "LengthIntervalTable":
        bins = np.array(d["bins"], dtype=float).reshape(-1, 3)
        return cls(bins[:, 0], bins[:, 1].astype(int), bins[:, 2].astype(int),
                   float(d["bin_width"]))


def learn_length_intervals(annotations, l_min=20.0, l_max=60.0, bin_width=5.0,
                           slack=1) -> LengthIntervalTable:
    """Count how many landmarks ground-truth sub-arcs of each length span.

    Every pair of landmarks on the same segment defines a sub-arc; its
    polyline length picks a bin centred on ``l_min + j * bin_width``.  Each
    bin stores ``[min - slack, max + slack]`` clamped to ``[2, N]``; empty
    bins are interpolated from their neighbours and the upper bound is made
    non-decreasing.
    """
    annotations = list(annotations)
    if not annotations:
        raise ValueError("need at least one annotation")
    centers = np.arange(l_min, l_max + 1e-9, bin_width)
    nb = centers.size
    lo = np.full(nb, np.iinfo(np.int64).max)
    hi = np.full(nb, -1)
    n = annotations[0].n
    for ann in annotations:
        for s, e in ann.segments():
            pts = ann.points[s:e]
            cum = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])
            ln = cum[None, :] - cum[:, None]
            ii, jj = np.nonzero(np.triu(np.ones_like(ln, dtype=bool), 1))
            ln = ln[ii, jj]
            j = np.rint((ln - l_min) / bin_width).astype(int)
            ok = (j >= 0) & (j < nb)
            cnt = jj - ii + 1
            for b, c in zip(j[ok], cnt[ok]):
                lo[b] = min(lo[b], c)
                hi[b] = max(hi[b], c)
    filled = hi >= 0
    if not filled.any():
        raise ValueError("no annotated sub-arc falls inside [l_min, l_max]")
    grid = np.arange(nb)
    lo_f = np.interp(grid, grid[filled], lo[filled])
    hi_f = np.interp(grid, grid[filled], hi[filled])
    lower = np.clip(np.floor(lo_f).astype(int) - slack, 2, n)
    upper = np.clip(np.ceil(hi_f).astype(int) + slack, 2, n)
    upper = np.maximum.accumulate(upper)
    lower = np.minimum(lower, upper)
    return LengthIntervalTable(centers, lower, upper, float(bin_width))


def nms(shapes: np.ndarray, errors: np.ndarray, radius: float, budget: int) -> list[int]:
    """Greedy suppression: keep the lowest-error shape, drop everything within
    ``radius`` average point distance of it, repeat."""
    order = np.lexsort((np.arange(errors.size), errors))
    alive = np.ones(errors.size, dtype=bool)
    kept = []
    for i in order:
        if not alive[i]:
            continue
        kept.append(int(i))
        if len(kept) >= budget:
            break
        d = np.mean(np.hypot(*(shapes - shapes[i]).transpose(2, 0, 1)), axis=1)
        alive &= d > radius
    return kept


class WindowBank:
    """Per-window pieces of the truncated model reused across fragments."""

    def __init__(self, model: PcaShapeModel, q: int):
        self.model = model
        self.q = q
        self._cache = {}

    def windows(self, k: int):
        if k in self._cache:
            return self._cache[k]
        m = self.model
        starts = [b for s, e in m.mu.segments() for b in range(s, e - k + 1)]
        starts = np.array(starts, dtype=int)
        if starts.size == 0:
            self._cache[k] = None
            return None
        rows = starts[:, None] + np.arange(k)[None, :]
        mu = m.mu.points[rows]  # (B, k, 2)
        Pw = np.concatenate([m.Px[rows, :self.q], m.Py[rows, :self.q]], axis=1)  # (B, 2k, q)
        G = np.einsum("bri,brj->bij", Pw, Pw)
        ok = np.linalg.cond(G) < 1e12 if self.q else np.ones(starts.size, dtype=bool)
        starts, mu, Pw, G = starts[ok], mu[ok], Pw[ok], G[ok]
        K = np.linalg.solve(G, Pw.transpose(0, 2, 1)) if self.q else np.zeros((starts.size, 0, 2 * k))
        entry = (starts, mu, Pw, K)
        self._cache[k] = entry
        return entry


def fit_windows(bank: WindowBank, pts: np.ndarray, n_it: int = 10):
    """Fit ``pts`` (k, 2) to every length-k landmark window at once.

    Returns ``(starts, params, beta, err)`` with ``params`` the similarity
    ``(a, b, dx, dy)`` per window and ``err`` the mean point distance.
    """
    k = pts.shape[0]
    entry = bank.windows(k)
    if entry is None:
        return None
    starts, mu, Pw, K = entry
    B, q = starts.size, bank.q
    tgt = np.broadcast_to(pts, (B, k, 2))
    w = np.full((B, k), 1.0 / k)
    mu_flat = np.concatenate([mu[..., 0], mu[..., 1]], axis=1)
    beta = np.zeros((B, q))
    for _ in range(n_it):
        src_flat = mu_flat + np.einsum("brq,bq->br", Pw, beta)
        src = np.stack([src_flat[:, :k], src_flat[:, k:]], axis=-1)
        params = solve_similarity(src, tgt, w)
        xo = _invert_ab(params, tgt)
        beta = np.einsum("bqr,br->bq", K, np.concatenate([xo[..., 0], xo[..., 1]], axis=1) - mu_flat)
    src_flat = mu_flat + np.einsum("brq,bq->br", Pw, beta)
    a, b, dx, dy = (params[:, j, None] for j in range(4))
    fx = a * src_flat[:, :k] + b * src_flat[:, k:] + dx
    fy = -b * src_flat[:, :k] + a * src_flat[:, k:] + dy
    err = np.mean(np.hypot(fx - pts[:, 0], fy - pts[:, 1]), axis=1)
    return starts, params, beta, err


def _transform(params) -> SimilarityTransform:
    a, b, dx, dy = params
    return SimilarityTransform(dx, dy, math.hypot(a, b), math.atan2(b, a))


def _shapes_of(model: PcaShapeModel, records) -> np.ndarray:
    if not records:
        return np.zeros((0, model.n, 2))
    return np.array([synthesize(model, r.inst).points for r in records])


def _fragment_length(frag) -> float:
    pts = frag.sample(64)
    return float(np.sum(np.hypot(*np.diff(pts, axis=0).T)))


def _beta_box(model: PcaShapeModel, q: int, prm: CgParams):
    if prm.beta_limit is None:
        return None
    return prm.beta_limit * np.sqrt(model.lam[:q])


def cg1(fragments, model: PcaShapeModel, table: LengthIntervalTable, prm: CgParams,
        prior: TransformPriorParams | None = None, bank: WindowBank | None = None) -> list[MatchRecord]:
    """Candidates from single fragments, at most ``prm.n_cand1`` of them.

    Fits whose mean residual exceeds ``prm.fit_discard``, whose pose the
    transform prior rules out, or whose coefficients leave the
    ``prm.beta_limit`` standard-deviation box are discarded before suppression.
    """
    q = min(prm.p_cg1, model.p)
    bank = bank or WindowBank(model, q)
    limit = _beta_box(model, q, prm)
    pool = []
    for frag in fragments:
        if not (prm.l_min <= frag.length <= prm.l_max):
            continue
        kl, ku = table.interval(_fragment_length(frag))
        for k in range(kl, ku + 1):
            fwd = frag.sample(k)
            for reverse, pts in ((False, fwd), (True, fwd[::-1].copy())):
                res = fit_windows(bank, pts, prm.n_fit_iter)
                if res is None:
                    continue
                starts, params, beta, err = res
                ok = err <= prm.fit_discard
                if limit is not None:
                    ok &= np.all(np.abs(beta) <= limit, axis=1)
                for j in np.nonzero(ok)[0]:
                    s = math.hypot(params[j, 0], params[j, 1])
                    if s <= 0:
                        continue
                    A = _transform(params[j])
                    if prior is not None and math.isinf(prior_transform(A, prior)):
                        continue
                    pool.append(MatchRecord(PcaInstance(A, beta[j]), frag.id, int(starts[j]),
                                            k, float(err[j]), reverse))
    if not pool:
        return []
    errors = np.array([r.fit_error for r in pool])
    keep = nms(_shapes_of(model, pool), errors, prm.d_nms1, prm.n_cand1)
    return [pool[i] for i in keep]


def cg2(cands, fragments, model: PcaShapeModel, prm: CgParams,
        prior: TransformPriorParams | None = None) -> list[MatchRecord]:
    """Refine CG1 candidates with a second fragment near the candidate shape.

    For fragment ``c`` the landmarks ``P_j``, ``P_k`` nearest its endpoints
    must satisfy ``d(c, P_j) + d(c, P_k) < 2 d_gate`` and ``[j, k]`` must not
    overlap the candidate's original match.  The CG1 candidates stay in the
    pool and compete with their refinements during suppression.
    """
    q = min(prm.p_cg2, model.p)
    limit = _beta_box(model, q, prm)
    frags = {f.id: f for f in fragments}
    ends = np.array([f.endpoints for f in fragments]).reshape(-1, 2, 2)
    seg_id = model.mu.segment_ids()
    pool = list(cands)
    for cand in cands:
        P = synthesize(model, cand.inst).points
        if not len(fragments):
            break
        dist = np.hypot(*(ends[:, :, None, :] - P[None, None]).transpose(3, 0, 1, 2))
        near = np.argmin(dist, axis=2)  # (F, 2)
        gate = dist[np.arange(len(fragments))[:, None], np.arange(2)[None, :], near].sum(axis=1)
        first = frags[cand.fragment_id]
        base_pts = first.sample(cand.k)
        if cand.reverse:
            base_pts = base_pts[::-1]
        lo1, hi1 = cand.b, cand.b + cand.k - 1
        for fi in np.nonzero(gate < 2 * prm.d_gate)[0]:
            frag = fragments[fi]
            if frag.id == cand.fragment_id:
                continue
            j, k = int(near[fi, 0]), int(near[fi, 1])
            reverse = j > k
            if reverse:
                j, k = k, j
            m = k - j + 1
            if m < 2 or seg_id[j] != seg_id[k]:
                continue
            if not (k < lo1 or j > hi1):
                continue
            pts2 = frag.sample(m)
            if reverse:
                pts2 = pts2[::-1]
            target = np.zeros((model.n, 2))
            w = np.zeros(model.n)
            target[lo1:hi1 + 1] = base_pts
            target[j:k + 1] = pts2
            w[lo1:hi1 + 1] = 1.0
            w[j:k + 1] = 1.0
            try:
                inst = fit_weighted_pca(model, target, w, prm.n_fit_iter, n_components=q)
            except ValueError:
                continue
            if limit is not None:
                beta = inst.beta.copy()
                beta[:q] = np.clip(beta[:q], -limit, limit)
                inst = PcaInstance(inst.A, beta)
            fitted = synthesize(model, inst).points
            sel = w > 0
            err = float(np.mean(np.hypot(*(fitted[sel] - target[sel]).T)))
            if err > prm.fit_discard:
                continue
            if prior is not None and math.isinf(prior_transform(inst.A, prior)):
                continue
            pool.append(MatchRecord(inst, cand.fragment_id, cand.b, cand.k, err, cand.reverse,
                                    (int(frag.id), j, m, bool(reverse))))
    if not pool:
        return []
    errors = np.array([r.fit_error for r in pool])
    keep = nms(_shapes_of(model, pool), errors, prm.d_nms2, prm.n_cand2)
    return [pool[i] for i in keep]


def closest_candidate_error(model: PcaShapeModel, cands, truth) -> float:
    """Smallest average point distance from any candidate shape to ``truth``."""
    if not cands:
        return math.inf
    return min(avg_point_error(synthesize(model, c.inst), truth) for c in cands)
