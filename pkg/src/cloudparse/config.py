"""Parameter containers for the energy, the candidate generators and the
transform prior.

Defaults follow the learned horse values (alpha=0.04, gamma=0.1, delta=2,
rho=2, r=1) and the candidate-generator settings l_min=20, l_max=60,
N1=200, D1=5, N2=400, D2=8, d_gate=20.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np


@dataclass(frozen=True)
class TransformPriorParams:
    s_min: float = 0.5
    s_max: float = 2.0
    theta_max: float = math.pi / 6
    x_c: float = 0.0
    y_c: float = 0.0
    r: float = 1.0

    def __post_init__(self):
        if not (0 < self.s_min < self.s_max):
            raise ValueError("need 0 < s_min < s_max")
        if not self.theta_max > 0:
            raise ValueError("theta_max must be positive")
        if self.r < 0:
            raise ValueError("r must be non-negative")

    def centered(self, width: float, height: float) -> "TransformPriorParams":
        return replace(self, x_c=width / 2.0, y_c=height / 2.0)


@dataclass(frozen=True)
class DeformationParams:
    """Per-landmark GMRF weights and the displacement label grid.

    ``gamma[i]`` couples landmark ``i`` to ``i - 1``; it is zeroed at every
    segment start by :meth:`uniform`.
    """

    alpha: np.ndarray
    gamma: np.ndarray
    d_max: float = 15.0
    d_step: float = 1.0

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float)
        gamma = np.array(self.gamma, dtype=float)
        if alpha.shape != gamma.shape or alpha.ndim != 1:
            raise ValueError("alpha and gamma must be 1-D arrays of equal length")
        if np.any(alpha < 0) or np.any(gamma < 0):
            raise ValueError("alpha and gamma must be non-negative")
        if not (self.d_max > 0 and self.d_step > 0):
            raise ValueError("d_max and d_step must be positive")
        gamma[0] = 0.0
        alpha.setflags(write=False)
        gamma.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "gamma", gamma)

    @classmethod
    def uniform(cls, n, segment_starts=(0,), alpha=0.04, gamma=0.1,
                d_max=15.0, d_step=1.0) -> "DeformationParams":
        g = np.full(n, float(gamma))
        g[list(segment_starts)] = 0.0
        return cls(np.full(n, float(alpha)), g, d_max, d_step)

    @property
    def n(self) -> int:
        return self.alpha.shape[0]

    @property
    def n_labels(self) -> int:
        return 2 * int(math.floor(self.d_max / self.d_step + 1e-9)) + 1

    def displacements(self) -> np.ndarray:
        """Label grid ``-d_max, ..., +d_max`` (label 0 is ``-d_max``)."""
        half = self.n_labels // 2
        return np.arange(-half, half + 1) * self.d_step

    @property
    def zero_label(self) -> int:
        return self.n_labels // 2


@dataclass(frozen=True)
class EnergyParams:
    deform: DeformationParams
    delta: float = 2.0
    rho: float = 2.0
    transform_prior: TransformPriorParams = field(default_factory=TransformPriorParams)
    snap_tol: float = 1.5
    n_components: int | None = None

    def __post_init__(self):
        if self.delta < 0 or self.rho < 0:
            raise ValueError("delta and rho must be non-negative")

    @classmethod
    def default(cls, n, segment_starts=(0,), **kw) -> "EnergyParams":
        dkw = {k: kw.pop(k) for k in ("alpha", "gamma", "d_max", "d_step") if k in kw}
        return cls(DeformationParams.uniform(n, segment_starts, **dkw), **kw)

    def to_json(self) -> dict:
        """Flat ``params`` block stored in the model file."""
        tp = self.transform_prior
        return {
            "alpha": self.deform.alpha.tolist(),
            "gamma": self.deform.gamma.tolist(),
            "delta": self.delta,
            "rho": self.rho,
            "r": tp.r,
            "s_min": tp.s_min,
            "s_max": tp.s_max,
            "theta_max": tp.theta_max,
            "d_max": self.deform.d_max,
            "d_step": self.deform.d_step,
            "snap_tol": self.snap_tol,
            "p": self.n_components,
        }

    @classmethod
    def from_json(cls, d: dict) -> "EnergyParams":
        deform = DeformationParams(d["alpha"], d["gamma"], d["d_max"], d["d_step"])
        tp = TransformPriorParams(d["s_min"], d["s_max"], d["theta_max"], r=d["r"])
        return cls(deform, d["delta"], d["rho"], tp, d["snap_tol"], d.get("p"))

    def with_scalars(self, alpha=None, gamma=None, **kw) -> "EnergyParams":
        """Copy with uniform alpha/gamma replaced, keeping segment zeros."""
        deform = self.deform
        if alpha is not None:
            deform = replace(deform, alpha=np.full(deform.n, float(alpha)))
        if gamma is not None:
            g = np.where(deform.gamma > 0, float(gamma), 0.0)
            deform = replace(deform, gamma=g)
        tp_keys = {"r", "s_min", "s_max", "theta_max"}
        tp_kw = {k: kw.pop(k) for k in list(kw) if k in tp_keys}
        tp = kw.pop("transform_prior", self.transform_prior)
        if tp_kw:
            tp = replace(tp, **tp_kw)
        if "p" in kw:
            kw["n_components"] = kw.pop("p")
        return replace(self, deform=deform, transform_prior=tp, **kw)


@dataclass(frozen=True)
class CgParams:
    n_cand1: int = 200
    n_cand2: int = 400
    d_nms1: float = 5.0
    d_nms2: float = 8.0
    d_gate: float = 20.0
    fit_discard: float = 3.0
    p_cg1: int = 4
    p_cg2: int = 8
    l_min: float = 20.0
    l_max: float = 60.0
    e_max: float = 1.5
    n_fit_iter: int = 10
    beta_limit: float | None = 3.0

    def __post_init__(self):
        for name in ("n_cand1", "n_cand2", "d_nms1", "d_nms2", "d_gate",
                     "fit_discard", "e_max", "n_fit_iter"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.p_cg1 < 0 or self.p_cg2 < 0:
            raise ValueError("component counts must be non-negative")
        if not self.l_min < self.l_max:
            raise ValueError("need l_min < l_max")
        if self.beta_limit is not None and not self.beta_limit > 0:
            raise ValueError("beta_limit must be positive or None")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "CgParams":
        return cls(**d)
