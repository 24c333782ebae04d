"""PCA point-distribution model.

Shapes are flattened as ``[x_1..x_N, y_1..y_N]`` so the stacked eigenvector
matrix ``[Px; Py]`` has orthonormal columns.  The model frame has the mean
shape centred at the origin with unit centroid size; a similarity transform
places it in the image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .config import DeformationParams, TransformPriorParams
from .geometry import LandmarkShape, SimilarityTransform, shape_normals

_LAMBDA_FLOOR = 1e-20


@dataclass(frozen=True)
class PcaInstance:
    A: SimilarityTransform
    beta: np.ndarray

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float).reshape(-1)
        if not np.all(np.isfinite(beta)):
            raise ValueError("beta must be finite")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

    def padded(self, p: int) -> "PcaInstance":
        """Instance with ``beta`` zero-padded or truncated to ``p`` entries."""
        b = np.zeros(p)
        m = min(p, self.beta.size)
        b[:m] = self.beta[:m]
        return PcaInstance(self.A, b)

    def to_json(self) -> dict:
        return {"A": self.A.as_dict(), "beta": self.beta.tolist()}

    @classmethod
    def from_json(cls, d) -> "PcaInstance":
        a = d["A"]
        return cls(SimilarityTransform(a["u"], a["v"], a["s"], a["theta"]), d["beta"])


@dataclass(frozen=True)
class PcaShapeModel:
    mu: LandmarkShape
    Px: np.ndarray  # (N, p)
    Py: np.ndarray  # (N, p)
    lam: np.ndarray  # (p,) descending
    mean_scale: float = 1.0
    scale_range: tuple[float, float] = (1.0, 1.0)
    extras: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        n = self.mu.n
        Px = np.array(self.Px, dtype=float).reshape(n, -1)
        Py = np.array(self.Py, dtype=float).reshape(n, -1)
        lam = np.array(self.lam, dtype=float).reshape(-1)
        if Px.shape != Py.shape or Px.shape[1] != lam.size:
            raise ValueError("inconsistent PCA matrix shapes")
        for arr in (Px, Py, lam):
            arr.setflags(write=False)
        object.__setattr__(self, "Px", Px)
        object.__setattr__(self, "Py", Py)
        object.__setattr__(self, "lam", lam)

    @property
    def n(self) -> int:
        return self.mu.n

    @property
    def p(self) -> int:
        return self.lam.size

    @property
    def segment_starts(self) -> tuple[int, ...]:
        return self.mu.segment_starts

    @property
    def P(self) -> np.ndarray:
        """Stacked ``(2N, p)`` eigenvector matrix."""
        return np.vstack([self.Px, self.Py])

    def truncated(self, p: int) -> "PcaShapeModel":
        if p > self.p:
            raise ValueError(f"model has only {self.p} components, asked for {p}")
        return PcaShapeModel(self.mu, self.Px[:, :p], self.Py[:, :p], self.lam[:p],
                             self.mean_scale, self.scale_range, self.extras)

    def to_json(self) -> dict:
        d = {
            "n": self.n,
            "p": self.p,
            "segment_starts": list(self.segment_starts),
            "mu_x": self.mu.points[:, 0].tolist(),
            "mu_y": self.mu.points[:, 1].tolist(),
            "Px": self.Px.tolist(),
            "Py": self.Py.tolist(),
            "lambda": self.lam.tolist(),
            "mean_scale": self.mean_scale,
            "scale_range": list(self.scale_range),
        }
        d.update(self.extras)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "PcaShapeModel":
        n, p = int(d["n"]), int(d["p"])
        mu = LandmarkShape(np.stack([d["mu_x"], d["mu_y"]], axis=1), tuple(d["segment_starts"]))
        Px = np.array(d["Px"], dtype=float).reshape(n, p)
        Py = np.array(d["Py"], dtype=float).reshape(n, p)
        known = {"n", "p", "segment_starts", "mu_x", "mu_y", "Px", "Py", "lambda",
                 "mean_scale", "scale_range"}
        extras = {k: v for k, v in d.items() if k not in known}
        return cls(mu, Px, Py, d["lambda"], float(d.get("mean_scale", 1.0)),
                   tuple(d.get("scale_range", (1.0, 1.0))), extras)


def _to_complex(shape) -> np.ndarray:
    pts = shape.points if isinstance(shape, LandmarkShape) else np.asarray(shape)
    return pts[:, 0] + 1j * pts[:, 1]


def procrustes_align(shapes, tol=1e-8, max_iter=100):
    """Generalized Procrustes analysis with tangent-space projection.

    Returns ``(aligned, mean, to_image)`` where ``aligned`` is ``(M, N)``
    complex, ``mean`` the unit-norm centred mean and ``to_image[j]`` the
    complex factor that maps aligned shape ``j`` back to its centred image
    pose.
    """
    Z = np.array([_to_complex(s) for s in shapes])
    Z = Z - Z.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(Z, axis=1)
    if np.any(norms < 1e-12):
        raise ValueError("degenerate training shape (all landmarks coincide)")
    ref = Z[0] / norms[0]
    mean = ref
    for _ in range(max_iter):
        c = (Z.conj() @ mean) / norms**2
        aligned = c[:, None] * Z
        new = aligned.mean(axis=0)
        rot = np.vdot(new, ref)
        new = new * (rot / abs(rot))
        new /= np.linalg.norm(new)
        moved = np.linalg.norm(new - mean)
        mean = new
        if moved < tol:
            break
    c = (Z.conj() @ mean) / norms**2
    aligned = c[:, None] * Z
    t = np.real(aligned.conj() @ mean)
    aligned = aligned / t[:, None]
    return aligned, mean, t / c


def train_pca(shapes, p: int, tol=1e-8, max_iter=100) -> PcaShapeModel:
    """Align ``shapes`` by Procrustes analysis and keep the top ``p`` modes."""
    shapes = list(shapes)
    if len(shapes) < 2:
        raise ValueError("need at least two training shapes")
    first = shapes[0]
    for k, s in enumerate(shapes):
        if not s.same_structure(first):
            raise ValueError(f"training shape {k} has a different landmark structure")
    n = first.n
    if p < 0 or p > min(2 * n, len(shapes)) - 1:
        raise ValueError(f"p={p} exceeds min(2N, #shapes) - 1")
    aligned, _, to_image = procrustes_align(shapes, tol, max_iter)
    V = np.hstack([aligned.real, aligned.imag])
    mu_vec = V.mean(axis=0)
    X = V - mu_vec
    _, sv, Vt = np.linalg.svd(X, full_matrices=False)
    lam = sv[:p] ** 2 / len(shapes)
    vecs = Vt[:p].T.copy()
    for j in range(p):
        if vecs[np.argmax(np.abs(vecs[:, j])), j] < 0:
            vecs[:, j] *= -1
    lam = np.maximum(lam, _LAMBDA_FLOOR)
    scales = np.abs(to_image)
    mu = LandmarkShape(np.stack([mu_vec[:n], mu_vec[n:]], axis=1), first.segment_starts)
    return PcaShapeModel(mu, vecs[:n], vecs[n:], lam, float(scales.mean()),
                         (float(scales.min()), float(scales.max())))


def model_frame_points(model: PcaShapeModel, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.size > model.p:
        raise ValueError(f"beta has {beta.size} entries, model has {model.p} components")
    q = beta.size
    x = model.mu.points[:, 0] + model.Px[:, :q] @ beta
    y = model.mu.points[:, 1] + model.Py[:, :q] @ beta
    return np.stack([x, y], axis=1)


def synthesize(model: PcaShapeModel, inst: PcaInstance) -> LandmarkShape:
    """PCA shape ``A(mu_x + Px beta, mu_y + Py beta)``.

    ``beta`` may be shorter than ``p``; it then drives the leading modes.
    """
    return model.mu.with_points(inst.A.apply(model_frame_points(model, inst.beta)))


def prior_beta(model: PcaShapeModel, beta, rho: float) -> float:
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.size > model.p:
        raise ValueError("beta longer than the number of model components")
    return float(rho * np.sum(beta**2 / model.lam[:beta.size]))


def prior_transform(A: SimilarityTransform, prm: TransformPriorParams) -> float:
    if not (prm.s_min <= A.s <= prm.s_max) or abs(A.theta) > prm.theta_max:
        return math.inf
    return prm.r * abs(A.u - prm.x_c) + prm.r * abs(A.v - prm.y_c)


def precision_band(deform: DeformationParams, segment_starts=(0,)) -> np.ndarray:
    """Upper banded storage of ``2Q`` for the deformation GMRF.

    ``Q`` is the matrix of ``sum alpha_i d_i^2 + sum gamma_i (d_i - d_{i-1})^2``
    with gamma zeroed at segment starts.
    """
    alpha = deform.alpha
    gamma = deform.gamma.copy()
    gamma[list(segment_starts)] = 0.0
    n = alpha.size
    diag = alpha + gamma
    diag[:-1] += gamma[1:]
    ab = np.zeros((2, n))
    ab[1] = 2.0 * diag
    ab[0, 1:] = -2.0 * gamma[1:]
    return ab


def sample_deformations(deform: DeformationParams, segment_starts, n_samples: int, rng) -> np.ndarray:
    """Draw ``(n_samples, N)`` displacement fields with density ``exp(-E(d))``."""
    ab = precision_band(deform, segment_starts)
    try:
        U = linalg.cholesky_banded(ab, lower=False)
    except linalg.LinAlgError as exc:
        raise ValueError("deformation precision is not positive definite "
                         "(a segment has all-zero alpha)") from exc
    z = rng.standard_normal((ab.shape[1], n_samples))
    return linalg.solve_banded((0, 1), U, z).T


def sample_shape(model: PcaShapeModel, A: SimilarityTransform, deform: DeformationParams,
                 rho: float, rng_seed) -> tuple[PcaInstance, LandmarkShape]:
    """Sample ``beta`` and a deformation field and return the displaced contour.

    ``beta_i ~ N(0, lambda_i / (2 rho))`` and ``d ~ N(0, (2Q)^-1)``; the
    contour is ``S_i + n_i d_i``.
    """
    if rho <= 0:
        raise ValueError("rho must be positive to sample beta")
    if deform.n != model.n:
        raise ValueError("deformation parameters do not match the model size")
    rng = np.random.default_rng(rng_seed)
    beta = rng.standard_normal(model.p) * np.sqrt(model.lam / (2.0 * rho))
    inst = PcaInstance(A, beta)
    S = synthesize(model, inst)
    d = sample_deformations(deform, model.segment_starts, 1, rng)[0]
    C = S.points + shape_normals(S) * d[:, None]
    return inst, S.with_points(C)


def solve_similarity(src: np.ndarray, dst: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted similarity ``(a, b, dx, dy)`` mapping ``src`` onto ``dst``.

    Minimises ``sum w_i |A(src_i) - dst_i|^2`` with
    ``A(x, y) = (a x + b y + dx, -b x + a y + dy)`` through its 4x4 normal
    equations.  Works on batches: ``src``/``dst`` are ``(..., N, 2)`` and
    ``w`` is ``(..., N)`` summing to one.
    """
    x2, y2 = src[..., 0], src[..., 1]
    x1, y1 = dst[..., 0], dst[..., 1]
    sx = np.sum(w * x2, axis=-1)
    sy = np.sum(w * y2, axis=-1)
    sw = np.sum(w, axis=-1)
    z = np.sum(w * (x2 * x2 + y2 * y2), axis=-1)
    r1 = np.sum(w * (x1 * x2 + y1 * y2), axis=-1)
    r2 = np.sum(w * (x1 * y2 - y1 * x2), axis=-1)
    tx = np.sum(w * x1, axis=-1)
    ty = np.sum(w * y1, axis=-1)
    # the system is singular iff the weighted spread of src vanishes
    spread = z * sw - sx * sx - sy * sy
    if np.any(spread <= 1e-12 * np.maximum(z * sw, 1e-300)):
        raise np.linalg.LinAlgError("singular weighted alignment system")
    # eliminating dx, dy from the last two rows decouples a and b
    a = (r1 * sw - sx * tx - sy * ty) / spread
    b = (r2 * sw - sy * tx + sx * ty) / spread
    dx = (tx - a * sx - b * sy) / sw
    dy = (ty - a * sy + b * sx) / sw
    return np.stack([a, b, dx, dy], axis=-1)


def _invert_ab(params: np.ndarray, pts: np.ndarray) -> np.ndarray:
    a, b, dx, dy = (params[..., j, None] for j in range(4))
    x = pts[..., 0] - dx
    y = pts[..., 1] - dy
    det = a * a + b * b
    return np.stack([(a * x - b * y) / det, (b * x + a * y) / det], axis=-1)


def projection_matrix(P: np.ndarray, w2: np.ndarray) -> np.ndarray:
    """``K = (P' W^2 P)^-1 P' W^2`` for a stacked ``(2N, p)`` basis."""
    PtW = P.T * w2
    G = PtW @ P
    if P.shape[1] and np.linalg.cond(G) > 1e12:
        raise np.linalg.LinAlgError("singular weighted PCA projection")
    return np.linalg.solve(G, PtW) if P.shape[1] else np.zeros((0, P.shape[0]))


def _uniform_projection(model: PcaShapeModel, q: int, P: np.ndarray) -> np.ndarray:
    cache = model.__dict__.setdefault("_uniform_K", {})
    if q not in cache:
        cache[q] = projection_matrix(P, np.full(P.shape[0], 1.0 / model.n) ** 2)
    return cache[q]


def fit_weighted_pca(model: PcaShapeModel, target, w=None, n_it: int = 10,
                     n_components: int | None = None) -> PcaInstance:
    """Weighted least-squares fit of ``(A, beta)`` to ``target``.

    Alternates a weighted similarity alignment of the current model shape
    onto the target with a weighted projection of the back-transformed
    target onto the PCA modes, starting from ``beta = 0``.  Landmarks with
    zero weight do not influence the result.

    Raises:
        ValueError: if the weights are negative or all zero, or the
            alignment / projection systems are singular.
    """
    pts = target.points if isinstance(target, LandmarkShape) else np.asarray(target, dtype=float)
    n = model.n
    if pts.shape != (n, 2):
        raise ValueError(f"target has {pts.shape[0]} landmarks, model has {n}")
    uniform = w is None
    w = np.full(n, 1.0 / n) if uniform else np.asarray(w, dtype=float)
    if w.shape != (n,) or np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be non-negative with a positive sum")
    w = w / w.sum()
    q = model.p if n_components is None else n_components
    if q > model.p:
        raise ValueError("n_components exceeds the model size")
    if n_it < 1:
        raise ValueError("n_it must be at least 1")
    P = np.vstack([model.Px[:, :q], model.Py[:, :q]])
    mu = np.concatenate([model.mu.points[:, 0], model.mu.points[:, 1]])
    active = w > 0
    tgt = np.where(active[:, None], pts, 0.0)
    # complex form of the alignment: A(z) = c z + t with c = a - ib, t = dx + i dy
    Pc = model.Px[:, :q] + 1j * model.Py[:, :q]
    muc = model.mu.points[:, 0] + 1j * model.mu.points[:, 1]
    tc = tgt[:, 0] + 1j * tgt[:, 1]
    tbar = w @ tc
    tcen = tc - tbar
    try:
        K = _uniform_projection(model, q, P) if uniform else \
            projection_matrix(P, np.concatenate([w, w]) ** 2)
        beta = np.zeros(q)
        for _ in range(n_it):
            z = muc + Pc @ beta
            zbar = w @ z
            zc = z - zbar
            spread = w @ (zc.real ** 2 + zc.imag ** 2)
            # singular iff the weighted spread of the model shape vanishes
            if spread <= 1e-12 * max(w @ (z.real ** 2 + z.imag ** 2), 1e-300):
                raise np.linalg.LinAlgError("singular weighted alignment system")
            c = (w * np.conj(zc)) @ tcen / spread
            t = tbar - c * zbar
            xo = np.where(active, (tc - t) / c, 0.0)
            beta = K @ (np.concatenate([xo.real, xo.imag]) - mu)
    except np.linalg.LinAlgError as exc:
        raise ValueError(str(exc)) from exc
    A = SimilarityTransform(t.real, t.imag, abs(c), math.atan2(-c.imag, c.real))
    return PcaInstance(A, beta)
