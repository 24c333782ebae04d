"""Landmark shapes, similarity transforms and the small geometric helpers
shared by the rest of the package.

Points are stored as ``(N, 2)`` float arrays in image coordinates (x to the
right, y down).  A similarity transform ``A = (u, v, s, theta)`` maps

    (x, y) -> (s x cos(theta) + s y sin(theta) + u,
               -s x sin(theta) + s y cos(theta) + v)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def _wrap_angle(theta: float) -> float:
    """Map an angle to (-pi, pi]."""
    t = math.remainder(theta, 2.0 * math.pi)
    if t <= -math.pi:
        t += 2.0 * math.pi
    return t


@dataclass(frozen=True)
class SimilarityTransform:
    u: float = 0.0
    v: float = 0.0
    s: float = 1.0
    theta: float = 0.0

    def __post_init__(self):
        if not (self.s > 0 and math.isfinite(self.s)):
            raise ValueError(f"similarity scale must be positive, got {self.s}")
        object.__setattr__(self, "u", float(self.u))
        object.__setattr__(self, "v", float(self.v))
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "theta", _wrap_angle(float(self.theta)))

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls(0.0, 0.0, 1.0, 0.0)

    @property
    def ab(self) -> tuple[float, float]:
        """Linear part as ``(a, b) = (s cos theta, s sin theta)``."""
        return self.s * math.cos(self.theta), self.s * math.sin(self.theta)

    def apply(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        a, b = self.ab
        x, y = pts[..., 0], pts[..., 1]
        return np.stack([a * x + b * y + self.u, -b * x + a * y + self.v], axis=-1)

    def inverse(self) -> "SimilarityTransform":
        return inverse(self)

    def as_dict(self) -> dict:
        return {"u": self.u, "v": self.v, "s": self.s, "theta": self.theta}


@dataclass(frozen=True)
class LandmarkShape:
    """Ordered landmarks, possibly split into several open contour segments.

    ``segment_starts`` lists the index of the first landmark of every
    segment; the first entry is always 0 and each segment has at least two
    points.
    """

    points: np.ndarray
    segment_starts: tuple[int, ...] = field(default=(0,))

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"points must have shape (N, 2), got {pts.shape}")
        if pts.shape[0] < 2:
            raise ValueError("a landmark shape needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("landmark coordinates must be finite")
        starts = tuple(int(s) for s in self.segment_starts)
        if not starts or starts[0] != 0:
            raise ValueError("segment_starts must begin with 0")
        bounds = list(starts) + [pts.shape[0]]
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            if hi - lo < 2:
                raise ValueError(f"segment starting at {lo} has fewer than 2 points")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "segment_starts", starts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def segments(self) -> list[tuple[int, int]]:
        """Half-open ``(start, stop)`` index ranges of the segments."""
        bounds = list(self.segment_starts) + [self.n]
        return list(zip(bounds[:-1], bounds[1:]))

    def segment_ids(self) -> np.ndarray:
        ids = np.zeros(self.n, dtype=int)
        for k, (lo, hi) in enumerate(self.segments()):
            ids[lo:hi] = k
        return ids

    def with_points(self, pts) -> "LandmarkShape":
        return LandmarkShape(pts, self.segment_starts)

    def same_structure(self, other: "LandmarkShape") -> bool:
        return self.n == other.n and self.segment_starts == other.segment_starts


def apply_transform(A: SimilarityTransform, shape: LandmarkShape) -> LandmarkShape:
    return shape.with_points(A.apply(shape.points))


def inverse(A: SimilarityTransform) -> SimilarityTransform:
    if not A.s > 0:
        raise ValueError("cannot invert a transform with non-positive scale")
    inv_s = 1.0 / A.s
    # inverse linear part is the same rotation with -theta, scaled by 1/s
    c, sn = math.cos(-A.theta), math.sin(-A.theta)
    u = -inv_s * (c * A.u + sn * A.v)
    v = -inv_s * (-sn * A.u + c * A.v)
    return SimilarityTransform(u, v, inv_s, -A.theta)


def compose(A: SimilarityTransform, B: SimilarityTransform) -> SimilarityTransform:
    """Transform equal to applying ``B`` first, then ``A``."""
    origin = A.apply(np.array([B.u, B.v]))
    return SimilarityTransform(origin[0], origin[1], A.s * B.s, A.theta + B.theta)


def shape_normals(shape: LandmarkShape, eps: float = 1e-12) -> np.ndarray:
    """Unit normals at every landmark, shape ``(N, 2)``.

    The tangent is the central difference inside a segment and a one-sided
    difference at segment ends; the normal is the tangent rotated by +90
    degrees, ``(tx, ty) -> (-ty, tx)``.  A landmark whose neighbours
    coincide reuses the previous landmark's normal.
    """
    pts = shape.points
    normals = np.empty_like(pts)
    for lo, hi in shape.segments():
        seg = pts[lo:hi]
        tan = np.empty_like(seg)
        tan[1:-1] = seg[2:] - seg[:-2]
        tan[0] = seg[1] - seg[0]
        tan[-1] = seg[-1] - seg[-2]
        norm = np.hypot(tan[:, 0], tan[:, 1])
        for j in range(hi - lo):
            i = lo + j
            if norm[j] > eps:
                normals[i] = (-tan[j, 1] / norm[j], tan[j, 0] / norm[j])
            elif i == 0:
                raise ValueError("degenerate tangent at the first landmark")
            else:
                normals[i] = normals[i - 1]
    return normals


def avg_point_error(a, b) -> float:
    """Mean Euclidean distance between corresponding landmarks."""
    pa = a.points if isinstance(a, LandmarkShape) else np.asarray(a, dtype=float)
    pb = b.points if isinstance(b, LandmarkShape) else np.asarray(b, dtype=float)
    if pa.shape != pb.shape:
        raise ValueError(f"landmark count mismatch: {pa.shape[0]} vs {pb.shape[0]}")
    if isinstance(a, LandmarkShape) and isinstance(b, LandmarkShape):
        if a.segment_starts != b.segment_starts:
            raise ValueError("segment structure mismatch")
    d = pa - pb
    return float(np.mean(np.hypot(d[:, 0], d[:, 1])))


def polyline_length(pts: np.ndarray) -> float:
    d = np.diff(np.asarray(pts, dtype=float), axis=0)
    return float(np.sum(np.hypot(d[:, 0], d[:, 1])))


def resample_polyline(pts: np.ndarray, k: int) -> np.ndarray:
    """``k`` points at equal arc length along a polyline, endpoints included."""
    pts = np.asarray(pts, dtype=float)
    seg = np.hypot(*np.diff(pts, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    if k == 1:
        return pts[:1].copy()
    targets = np.linspace(0.0, cum[-1], k)
    x = np.interp(targets, cum, pts[:, 0])
    y = np.interp(targets, cum, pts[:, 1])
    return np.stack([x, y], axis=1)
