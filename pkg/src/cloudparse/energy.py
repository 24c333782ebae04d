"""Parsing energy: chain-continuity data term, GMRF deformation term and the
PCA / transform priors.

A parse is represented by one displacement label per landmark; label ``l``
means the offset ``d(l) = -d_max + l * d_step`` along the PCA-shape normal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as _k
from .config import DeformationParams, EnergyParams
from .geometry import LandmarkShape
from .shape_model import PcaInstance, PcaShapeModel, prior_beta, prior_transform

NONE = -1


class ChainLocator:
    """Nearest-pixel lookup over traced chains.

    Pixels live on the integer grid, so a query only has to scan the cells
    within ``ceil(tol)`` of it; the grid stores the smallest chain id per pixel.
    """

    def __init__(self, chains):
        chains = [c for c in chains if len(c)]
        if chains:
            pix = np.vstack([c.pixels for c in chains]).astype(np.int64)
            ids = np.concatenate([np.full(len(c), c.id, dtype=np.int64) for c in chains])
            self.origin = pix.min(axis=0)
            w, h = pix.max(axis=0) - self.origin + 1
            grid = np.full((h, w), NONE, dtype=np.int64)
            order = np.argsort(-ids, kind="stable")
            rel = pix[order] - self.origin
            grid[rel[:, 1], rel[:, 0]] = ids[order]
            self.grid = grid
        else:
            self.origin = np.zeros(2, dtype=np.int64)
            self.grid = np.full((0, 0), NONE, dtype=np.int64)

    def lookup(self, pts: np.ndarray, tol: float) -> np.ndarray:
        """Chain id of the nearest pixel within ``tol`` of each point, else -1.

        Equidistant pixels on different chains resolve to the smaller id.
        """
        pts = np.asarray(pts, dtype=float)
        flat = np.ascontiguousarray(pts.reshape(-1, 2))
        out = _k.grid_lookup(self.grid, int(self.origin[0]), int(self.origin[1]), flat,
                             float(tol))
        return out.reshape(pts.shape[:-1])


@dataclass(frozen=True)
class ChainMembershipIndex:
    """``table[i, l]``: chain id under landmark ``i`` displaced by label ``l``."""

    table: np.ndarray  # (N, L) int, -1 for none
    segment_starts: tuple[int, ...]


def build_membership_index(chains, pca_shape: LandmarkShape, normals: np.ndarray,
                           params: EnergyParams) -> ChainMembershipIndex:
    locator = chains if isinstance(chains, ChainLocator) else ChainLocator(chains)
    if normals.shape != pca_shape.points.shape:
        raise ValueError("normals do not match the shape")
    disp = params.deform.displacements()
    pos = pca_shape.points[:, None, :] + normals[:, None, :] * disp[None, :, None]
    table = locator.lookup(pos, params.snap_tol)
    return ChainMembershipIndex(table, pca_shape.segment_starts)


def _edge_mask(n: int, segment_starts) -> np.ndarray:
    """``mask[i]`` is True when landmarks ``i - 1`` and ``i`` share a segment."""
    m = np.ones(n, dtype=bool)
    m[list(segment_starts)] = False
    return m


def energy_data(labels, idx: ChainMembershipIndex, delta: float) -> float:
    labels = np.asarray(labels, dtype=int)
    n = labels.size
    ids = idx.table[np.arange(n), labels]
    same = (ids[1:] == ids[:-1]) & (ids[1:] != NONE) & _edge_mask(n, idx.segment_starts)[1:]
    return float(-delta * np.count_nonzero(same))


def label_displacements(labels, deform: DeformationParams) -> np.ndarray:
    return deform.displacements()[np.asarray(labels, dtype=int)]


def energy_deformation(labels, params: DeformationParams, segment_starts=(0,)) -> float:
    d = label_displacements(labels, params)
    gamma = params.gamma * _edge_mask(d.size, segment_starts)
    return float(np.sum(params.alpha * d**2) + np.sum(gamma[1:] * np.diff(d) ** 2))


def energy_total(labels, inst: PcaInstance, model: PcaShapeModel,
                 idx: ChainMembershipIndex, params: EnergyParams) -> float:
    """Data + deformation + beta prior + transform prior."""
    return (energy_data(labels, idx, params.delta)
            + energy_deformation(labels, params.deform, model.segment_starts)
            + prior_beta(model, inst.beta, params.rho)
            + prior_transform(inst.A, params.transform_prior))
