"""Chain tracing, anchor subsampling and cubic contour-fragment extraction.

Adjacency is 8-connectivity with redundant diagonal links dropped
(m-adjacency): a diagonal neighbour only counts when the two pixels share
no set 4-neighbour.  This keeps one-pixel-wide staircases from looking like
junctions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

_N4 = ((1, 0), (0, 1), (-1, 0), (0, -1))
_ND = ((1, 1), (-1, 1), (-1, -1), (1, -1))


@dataclass(frozen=True)
class PointCloud:
    width: int
    height: int
    points: np.ndarray  # (M, 2) int, unique, row-major order

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64).reshape(-1, 2)
        if pts.size:
            if (pts[:, 0].min() < 0 or pts[:, 1].min() < 0
                    or pts[:, 0].max() >= self.width or pts[:, 1].max() >= self.height):
                raise ValueError("point outside the image bounds")
            pts = np.unique(pts, axis=0)
            pts = pts[np.lexsort((pts[:, 0], pts[:, 1]))]
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    def __len__(self):
        return self.points.shape[0]

    def mask(self) -> np.ndarray:
        m = np.zeros((self.height, self.width), dtype=bool)
        if len(self):
            m[self.points[:, 1], self.points[:, 0]] = True
        return m


@dataclass(frozen=True)
class Chain:
    id: int
    pixels: np.ndarray  # (n, 2) int
    subsample_indices: tuple[int, ...] = ()

    def __len__(self):
        return self.pixels.shape[0]

    def arc_lengths(self) -> np.ndarray:
        """Cumulative arc length at each pixel (1 per 4-step, sqrt(2) per diagonal)."""
        if len(self) < 2:
            return np.zeros(len(self))
        step = np.hypot(*np.diff(self.pixels, axis=0).T.astype(float))
        return np.concatenate([[0.0], np.cumsum(step)])


@dataclass(frozen=True)
class ContourFragment:
    """Cubic ``y = c0 + c1 x + c2 x^2 + c3 x^3`` in the frame whose origin is
    the first anchor pixel and whose x-axis points at the second one."""

    chain_id: int
    start_idx: int  # pixel index of the first anchor on the chain
    end_idx: int
    coeffs: tuple[float, float, float, float]
    length: float  # chain arc length between the anchors
    origin: tuple[float, float]
    axis: tuple[float, float]  # unit vector of the frame x-axis
    span: float  # distance between the anchors
    max_residual: float
    id: int = -1

    def to_image(self, uv: np.ndarray) -> np.ndarray:
        ex = np.array(self.axis)
        ey = np.array([-ex[1], ex[0]])
        return np.asarray(self.origin) + uv[:, :1] * ex + uv[:, 1:2] * ey

    def evaluate(self, u) -> np.ndarray:
        return np.polynomial.polynomial.polyval(u, self.coeffs)

    @property
    def endpoints(self) -> np.ndarray:
        u = np.array([0.0, self.span])
        return self.to_image(np.stack([u, self.evaluate(u)], axis=1))

    def sample(self, k: int, dense: int = 200) -> np.ndarray:
        """``k`` points at equal arc length along the fitted cubic."""
        u = np.linspace(0.0, self.span, dense)
        uv = np.stack([u, self.evaluate(u)], axis=1)
        cum = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(uv, axis=0).T))])
        t = np.linspace(0.0, cum[-1], k)
        us = np.interp(t, cum, u)
        return self.to_image(np.stack([us, self.evaluate(us)], axis=1))


def _m_neighbors(p, pixset) -> list[tuple[int, int]]:
    x, y = p
    out = [(x + dx, y + dy) for dx, dy in _N4 if (x + dx, y + dy) in pixset]
    for dx, dy in _ND:
        q = (x + dx, y + dy)
        if q not in pixset:
            continue
        # shared 4-neighbours of p and q are (x+dx, y) and (x, y+dy)
        if (x + dx, y) in pixset or (x, y + dy) in pixset:
            continue
        out.append(q)
    return out


def trace_chains(cloud: PointCloud) -> list[Chain]:
    """Partition the cloud into simple pixel chains.

    Tracing starts from end pixels (at most one neighbour) in row-major
    order, then from the row-major-first unvisited pixel of whatever is left
    (closed loops, junction remnants).  A chain stops after entering a
    junction pixel (three or more neighbours) or when no unvisited neighbour
    remains.
    """
    pts = [tuple(map(int, p)) for p in cloud.points]
    pixset = set(pts)
    nbrs = {p: _m_neighbors(p, pixset) for p in pts}
    visited: set = set()
    chains: list[Chain] = []

    def walk(start):
        path = [start]
        visited.add(start)
        cur = start
        while True:
            if cur is not start and len(nbrs[cur]) >= 3:
                break
            nxt = next((q for q in nbrs[cur] if q not in visited), None)
            if nxt is None:
                break
            path.append(nxt)
            visited.add(nxt)
            cur = nxt
        chains.append(Chain(len(chains), np.array(path, dtype=np.int64)))

    for p in pts:
        if len(nbrs[p]) <= 1 and p not in visited:
            walk(p)
    for p in pts:
        if p not in visited:
            walk(p)
    return chains


def subsample_chain(chain: Chain, step: float = 5.0) -> Chain:
    """Mark anchor pixels roughly every ``step`` pixels of arc length.

    An anchor is placed at the first pixel whose arc distance from the
    previous anchor reaches ``step``; the last pixel is always an anchor.
    """
    if step < 2:
        raise ValueError("step must be at least 2")
    n = len(chain)
    if n == 0:
        return replace(chain, subsample_indices=())
    cum = chain.arc_lengths()
    idx = [0]
    for i in range(1, n):
        if cum[i] - cum[idx[-1]] >= step - 1e-9:
            idx.append(i)
    if idx[-1] != n - 1:
        idx.append(n - 1)
    return replace(chain, subsample_indices=tuple(idx))


def fit_cubic(pixels: np.ndarray):
    """Fit a cubic through ``pixels`` in the frame of its first and last pixel.

    Returns ``(coeffs, max_residual, origin, axis, span)`` or ``None`` when the
    endpoints coincide or the run folds back beyond the endpoint span.
    """
    p = pixels.astype(float)
    origin = p[0]
    chord = p[-1] - origin
    span = math.hypot(*chord)
    if span < 1e-9:
        return None
    ex = chord / span
    ey = np.array([-ex[1], ex[0]])
    rel = p - origin
    u = rel @ ex
    v = rel @ ey
    if u.min() < -2.0 or u.max() > span + 2.0:
        return None
    t = u / span
    V = np.vander(t, 4, increasing=True)
    a, *_ = np.linalg.lstsq(V, v, rcond=None)
    resid = float(np.max(np.abs(V @ a - v)))
    coeffs = tuple(float(a[j] / span**j) for j in range(4))
    return coeffs, resid, (float(origin[0]), float(origin[1])), (float(ex[0]), float(ex[1])), span


def extract_fragments(chains, l_min=20.0, l_max=60.0, e_max=1.5, step=5.0) -> list[ContourFragment]:
    """All maximal cubic fragments between anchor pairs of the same chain.

    Chains without anchors are subsampled with ``step`` first.  Fragments
    whose pixel range lies inside another accepted fragment's range on the
    same chain are dropped.  Output is sorted by (chain, start, end) and the
    ``id`` field is the position in that order.
    """
    if not l_min < l_max:
        raise ValueError("need l_min < l_max")
    if e_max <= 0:
        raise ValueError("e_max must be positive")
    out: list[ContourFragment] = []
    for ch in chains:
        if len(ch) < 4:
            continue
        if not ch.subsample_indices:
            ch = subsample_chain(ch, step)
        cum = ch.arc_lengths()
        anchors = ch.subsample_indices
        kept = []
        for ia, a in enumerate(anchors):
            for b in anchors[ia + 1:]:
                length = cum[b] - cum[a]
                if length < l_min:
                    continue
                if length > l_max:
                    break
                fit = fit_cubic(ch.pixels[a:b + 1])
                if fit is None:
                    continue
                coeffs, resid, origin, axis, span = fit
                if resid > e_max:
                    continue
                kept.append(ContourFragment(ch.id, a, b, coeffs, float(length),
                                            origin, axis, span, resid))
        ranges = [(f.start_idx, f.end_idx) for f in kept]
        for f in kept:
            s, e = f.start_idx, f.end_idx
            if any(s2 <= s and e <= e2 and (s2, e2) != (s, e) for s2, e2 in ranges):
                continue
            out.append(f)
    out.sort(key=lambda f: (f.chain_id, f.start_idx, f.end_idx))
    return [replace(f, id=i) for i, f in enumerate(out)]
