"""Synthetic benchmark: a horse-like shape family, shape-model sampling and
rasterisation into cluttered edge-like point clouds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from skimage.draw import line as draw_line

from .config import EnergyParams
from .geometry import LandmarkShape, SimilarityTransform, resample_polyline
from .preprocess import PointCloud
from .shape_model import PcaInstance, PcaShapeModel, sample_shape


def _base_radius(t, coeffs):
    # a body with a head bump and two leg bumps; coeffs perturb each part
    head, legs, neck, c2, s3 = coeffs
    r = 1.0 + (0.25 + c2) * np.cos(2 * t) + s3 * np.sin(3 * t)
    r += (0.45 + head) * np.exp(-((t - (0.85 + neck)) / 0.22) ** 2)
    r += (0.5 + legs) * np.exp(-((t - 4.2) / 0.12) ** 2)
    r += (0.5 - legs) * np.exp(-((t - 5.2) / 0.12) ** 2)
    return r


def horse_like_shape(coeffs, n_landmarks=48, radius=30.0) -> np.ndarray:
    """Closed outline resampled to ``n_landmarks`` points at equal arc length,
    centred at the origin."""
    t = np.linspace(0.0, 2 * np.pi, 2000)
    r = radius * _base_radius(t, coeffs)
    pts = np.stack([r * np.cos(t), -r * np.sin(t)], axis=1)
    out = resample_polyline(pts, n_landmarks + 1)[:-1]
    return out - out.mean(axis=0)


def horse_like_training_set(n_shapes=40, n_landmarks=48, seed=0, width=160, height=160,
                            radius=30.0, pose_jitter=(8.0, 0.1, 0.15)) -> list[LandmarkShape]:
    """Annotations drawn from the shape family at jittered image poses."""
    rng = np.random.default_rng(seed)
    sd = np.array([0.12, 0.15, 0.12, 0.06, 0.05])
    shapes = []
    for _ in range(n_shapes):
        pts = horse_like_shape(rng.standard_normal(5) * sd, n_landmarks, radius)
        A = random_pose(rng, width, height, 1.0, pose_jitter)
        shapes.append(LandmarkShape(A.apply(pts)))
    return shapes


def random_pose(rng, width, height, scale, jitter=(8.0, 0.1, 0.15)) -> SimilarityTransform:
    shift, ds, dtheta = jitter
    u = width / 2.0 + rng.uniform(-shift, shift)
    v = height / 2.0 + rng.uniform(-shift, shift)
    return SimilarityTransform(u, v, scale * rng.uniform(1 - ds, 1 + ds),
                               rng.uniform(-dtheta, dtheta))


def rasterize_polyline(pts: np.ndarray, closed=False) -> np.ndarray:
    """8-connected pixel path through the rounded vertices, in drawing order."""
    q = np.rint(pts).astype(int)
    if closed:
        q = np.vstack([q, q[:1]])
    path = [q[0]]
    for a, b in zip(q[:-1], q[1:]):
        rr, cc = draw_line(a[1], a[0], b[1], b[0])
        seg = np.stack([cc, rr], axis=1)[1:]
        path.extend(seg)
    path = np.array(path)
    keep = np.ones(len(path), dtype=bool)
    keep[1:] = np.any(path[1:] != path[:-1], axis=1)
    return path[keep]


def drop_runs(path: np.ndarray, fraction: float, rng, run=(3, 12)) -> np.ndarray:
    """Remove about ``fraction`` of the path in contiguous runs."""
    n = len(path)
    target = int(round(fraction * n))
    removed = np.zeros(n, dtype=bool)
    guard = 0
    while removed.sum() < target and guard < 10 * n:
        guard += 1
        length = int(rng.integers(run[0], run[1] + 1))
        length = min(length, target - int(removed.sum()))
        start = int(rng.integers(0, n))
        idx = (start + np.arange(length)) % n
        if removed[idx].any():
            continue
        removed[idx] = True
    return path[~removed]


def clutter_chain(rng, width, height, length_range=(20.0, 60.0)) -> np.ndarray:
    """A random smooth cubic arc rasterised to pixels."""
    length = rng.uniform(*length_range)
    origin = rng.uniform([0, 0], [width, height])
    ang = rng.uniform(0, 2 * np.pi)
    ex = np.array([math.cos(ang), math.sin(ang)])
    ey = np.array([-ex[1], ex[0]])
    u = np.linspace(0.0, 1.0, max(int(length), 2))
    c2, c3 = rng.normal(0.0, 0.3, 2)
    v = length * (c2 * u * (u - 1) + c3 * u * (u - 0.5) * (u - 1))
    pts = origin + (length * u)[:, None] * ex + v[:, None] * ey
    return rasterize_polyline(pts)


@dataclass(frozen=True)
class SyntheticSpec:
    model: PcaShapeModel
    params: EnergyParams
    n_images: int = 50
    dropout: float = 0.2
    clutter_chains: int = 10
    clutter_len: tuple[float, float] = (20.0, 60.0)
    seed: int = 0
    width: int = 160
    height: int = 160
    closed: bool = True
    pose_jitter: tuple[float, float, float] = (8.0, 0.1, 0.15)

    def __post_init__(self):
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if self.n_images < 0 or self.clutter_chains < 0:
            raise ValueError("counts must be non-negative")


@dataclass(frozen=True)
class SyntheticImage:
    cloud: PointCloud
    truth: LandmarkShape
    inst: PcaInstance
    seed: int


def _clip(pix, width, height):
    ok = (pix[:, 0] >= 0) & (pix[:, 0] < width) & (pix[:, 1] >= 0) & (pix[:, 1] < height)
    return pix[ok]


def make_image(spec: SyntheticSpec, seed) -> SyntheticImage:
    rng = np.random.default_rng(seed)
    A = random_pose(rng, spec.width, spec.height, spec.model.mean_scale, spec.pose_jitter)
    inst, contour = sample_shape(spec.model, A, spec.params.deform, spec.params.rho,
                                 int(rng.integers(2**63 - 1)))
    pieces = []
    for lo, hi in contour.segments():
        path = rasterize_polyline(contour.points[lo:hi], closed=spec.closed)
        if spec.dropout > 0:
            path = drop_runs(path, spec.dropout, rng)
        pieces.append(path)
    for _ in range(spec.clutter_chains):
        pieces.append(clutter_chain(rng, spec.width, spec.height, spec.clutter_len))
    pix = np.vstack(pieces) if pieces else np.zeros((0, 2), dtype=int)
    cloud = PointCloud(spec.width, spec.height, _clip(pix, spec.width, spec.height))
    return SyntheticImage(cloud, contour, inst, int(seed) if np.isscalar(seed) else 0)


def generate_suite(spec: SyntheticSpec) -> list[SyntheticImage]:
    seeds = np.random.SeedSequence(spec.seed).generate_state(spec.n_images, dtype=np.uint64)
    return [make_image(spec, int(s)) for s in seeds]
