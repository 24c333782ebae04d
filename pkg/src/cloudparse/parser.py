"""Object parsing: data-driven candidates refined by alternating exact DP over
the normal displacements and a least-squares refit of the PCA backbone.
Also the centre-initialised Active Shape Model baseline."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .candidates import LengthIntervalTable, MatchRecord, WindowBank, cg1, cg2
from .config import CgParams, EnergyParams
from .dp import solve_membership_dp
from .energy import ChainLocator, build_membership_index, energy_total, label_displacements
from .formats import shape_to_json
from .geometry import LandmarkShape, SimilarityTransform, shape_normals
from .preprocess import PointCloud, extract_fragments, subsample_chain, trace_chains
from .shape_model import PcaInstance, PcaShapeModel, fit_weighted_pca, synthesize


class NoHypothesisError(RuntimeError):
    def __init__(self, n_chains: int, n_fragments: int):
        super().__init__(f"no hypothesis: {n_chains} chains, {n_fragments} contour fragments, "
                         "zero candidates")
        self.n_chains = n_chains
        self.n_fragments = n_fragments


@dataclass
class PreparedCloud:
    cloud: PointCloud
    chains: list
    fragments: list
    locator: ChainLocator


def prepare(cloud: PointCloud, cg: CgParams, step: float = 5.0) -> PreparedCloud:
    chains = [subsample_chain(c, step) for c in trace_chains(cloud)]
    frags = extract_fragments(chains, cg.l_min, cg.l_max, cg.e_max, step)
    return PreparedCloud(cloud, chains, frags, ChainLocator(chains))


@dataclass
class ParseResult:
    contour: LandmarkShape
    inst: PcaInstance
    energy: float
    candidate_index: int
    per_candidate_energies: list = field(default_factory=list)
    labels: np.ndarray | None = None

    def to_json(self) -> dict:
        def num(x):
            return float(x) if math.isfinite(x) else None

        return {
            "contour": shape_to_json(self.contour),
            "A": self.inst.A.as_dict(),
            "beta": self.inst.beta.tolist(),
            "energy": num(self.energy),
            "candidate_index": self.candidate_index,
            "per_candidate_energies": [num(e) for e in self.per_candidate_energies],
        }


def parse_model(model: PcaShapeModel, params: EnergyParams) -> PcaShapeModel:
    p = model.p if params.n_components is None else min(params.n_components, model.p)
    return model.truncated(p)


def _dp_step(model, inst, locator, params):
    S = synthesize(model, inst)
    normals = shape_normals(S)
    idx = build_membership_index(locator, S, normals, params)
    labels = solve_membership_dp(idx, params)
    return S, normals, idx, labels


def refine_candidate(inst: PcaInstance, model: PcaShapeModel, locator: ChainLocator,
                     params: EnergyParams, n_iter: int = 10, n_fit_iter: int = 10,
                     tol: float = 1e-6):
    """Alternate DP and refit up to ``n_iter`` times from ``inst``.

    The refit ignores the priors, so the energy along the way is not
    monotone; the lowest-energy state visited (earliest on ties) is
    returned.  Stops early once a round moves no backbone landmark by more
    than ``tol`` pixels and reproduces the previous labels.  Returns
    ``(contour, inst, labels, energy)`` where the contour is the DP optimum
    for the returned backbone.
    """
    inst = inst.padded(model.p)
    best = None

    def consider(S, normals, idx, labels, inst):
        nonlocal best
        e = energy_total(labels, inst, model, idx, params)
        if best is None or e < best[4]:
            best = (S, normals, labels, inst, e)

    try:
        S, normals, idx, labels = _dp_step(model, inst, locator, params)
        consider(S, normals, idx, labels, inst)
        for _ in range(n_iter):
            d = label_displacements(labels, params.deform)
            C = S.points + normals * d[:, None]
            inst = fit_weighted_pca(model, C, None, n_fit_iter)
            prev_pts, prev_labels = S.points, labels
            S, normals, idx, labels = _dp_step(model, inst, locator, params)
            consider(S, normals, idx, labels, inst)
            if (np.max(np.abs(S.points - prev_pts)) <= tol
                    and np.array_equal(labels, prev_labels)):
                break
    except ValueError:
        if best is None:
            S = synthesize(model, inst)
            return S, inst, np.full(model.n, params.deform.zero_label), math.inf
    S, normals, labels, inst, energy = best
    d = label_displacements(labels, params.deform)
    contour = S.with_points(S.points + normals * d[:, None])
    return contour, inst, labels, energy


_WORKER = {}


def _init_worker(model, locator, params, n_iter, n_fit_iter):
    _WORKER.update(model=model, locator=locator, params=params, n_iter=n_iter,
                   n_fit_iter=n_fit_iter)


def _refine_in_worker(inst):
    w = _WORKER
    return refine_candidate(inst, w["model"], w["locator"], w["params"], w["n_iter"],
                            w["n_fit_iter"])


def refine_all(insts, model, locator, params, n_iter=10, n_fit_iter=10, jobs=1):
    if jobs <= 1 or len(insts) < 2:
        return [refine_candidate(i, model, locator, params, n_iter, n_fit_iter) for i in insts]
    with ProcessPoolExecutor(jobs, initializer=_init_worker,
                             initargs=(model, locator, params, n_iter, n_fit_iter)) as ex:
        chunk = max(1, len(insts) // (4 * jobs))
        return list(ex.map(_refine_in_worker, insts, chunksize=chunk))


def generate_candidates(prep: PreparedCloud, model: PcaShapeModel, table: LengthIntervalTable,
                        cg: CgParams, params: EnergyParams, use_cg2: bool = False,
                        bank: WindowBank | None = None) -> list[MatchRecord]:
    prior = params.transform_prior.centered(prep.cloud.width, prep.cloud.height)
    cands = cg1(prep.fragments, model, table, cg, prior, bank)
    if use_cg2 and cands:
        cands = cg2(cands, prep.fragments, model, cg, prior)
    return cands


def parse(cloud, model: PcaShapeModel, energy_params: EnergyParams, cg_params: CgParams,
          n_iter: int = 10, use_cg2: bool = False, table: LengthIntervalTable | None = None,
          jobs: int = 1, prepared: PreparedCloud | None = None,
          candidates: list | None = None) -> ParseResult:
    """Parse ``cloud``: generate candidates, refine each, keep the lowest energy.

    Raises:
        NoHypothesisError: when no candidate survives generation.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be at least 1")
    prep = prepared or prepare(cloud, cg_params)
    cloud = prep.cloud
    params = energy_params.with_scalars(
        transform_prior=energy_params.transform_prior.centered(cloud.width, cloud.height))
    if candidates is None:
        if table is None:
            if "length_table" not in model.extras:
                raise ValueError("no length-interval table given or stored with the model")
            table = LengthIntervalTable.from_json(model.extras["length_table"])
        candidates = generate_candidates(prep, model, table, cg_params, params, use_cg2)
    if not candidates:
        raise NoHypothesisError(len(prep.chains), len(prep.fragments))
    pmodel = parse_model(model, params)
    results = refine_all([c.inst for c in candidates], pmodel, prep.locator, params,
                         n_iter, cg_params.n_fit_iter, jobs)
    energies = [r[3] for r in results]
    best = int(np.argmin(energies))
    contour, inst, labels, energy = results[best]
    return ParseResult(contour, inst, energy, best, energies, labels)


def recompute_energy(result: ParseResult, model: PcaShapeModel, chains,
                     params: EnergyParams, width: int, height: int) -> float:
    """Energy of a parse recomputed from its contour and backbone alone."""
    params = params.with_scalars(transform_prior=params.transform_prior.centered(width, height))
    pmodel = parse_model(model, params)
    S = synthesize(pmodel, result.inst.padded(pmodel.p))
    normals = shape_normals(S)
    d = np.sum((result.contour.points - S.points) * normals, axis=1)
    deform = params.deform
    labels = np.rint((d + deform.zero_label * deform.d_step) / deform.d_step).astype(int)
    idx = build_membership_index(chains, S, normals, params)
    return energy_total(labels, result.inst.padded(pmodel.p), pmodel, idx, params)


def asm_baseline(cloud: PointCloud, model: PcaShapeModel, n_updates: int = 20,
                 d_max: float = 15.0, d_step: float = 1.0, n_components: int | None = None,
                 params: EnergyParams | None = None) -> ParseResult:
    """Classic ASM started at the image centre with the mean training scale.

    Each update moves every landmark to the nearest cloud pixel along its
    normal (within ``d_max``), refits ``(A, beta)`` and clamps
    ``|beta_i| <= 3 sqrt(lambda_i)``.
    """
    pmodel = model if n_components is None else model.truncated(min(n_components, model.p))
    inst = PcaInstance(SimilarityTransform(cloud.width / 2.0, cloud.height / 2.0,
                                           model.mean_scale, 0.0), np.zeros(pmodel.p))
    mask = cloud.mask()
    half = int(math.floor(d_max / d_step + 1e-9))
    offsets = np.arange(-half, half + 1) * d_step
    order = np.argsort(np.abs(offsets), kind="stable")
    offsets = offsets[order]
    limit = 3.0 * np.sqrt(pmodel.lam)
    if len(cloud):
        for _ in range(n_updates):
            S = synthesize(pmodel, inst)
            normals = shape_normals(S)
            pos = S.points[:, None, :] + normals[:, None, :] * offsets[None, :, None]
            pix = np.rint(pos).astype(int)
            inside = ((pix[..., 0] >= 0) & (pix[..., 0] < cloud.width)
                      & (pix[..., 1] >= 0) & (pix[..., 1] < cloud.height))
            hit = np.zeros(inside.shape, dtype=bool)
            hit[inside] = mask[pix[..., 1][inside], pix[..., 0][inside]]
            first = np.argmax(hit, axis=1)
            has = hit.any(axis=1)
            target = S.points.copy()
            target[has] = pix[np.nonzero(has)[0], first[has]]
            fit = fit_weighted_pca(pmodel, target, None)
            inst = PcaInstance(fit.A, np.clip(fit.beta, -limit, limit))
    S = synthesize(pmodel, inst)
    energy = math.nan
    if params is not None:
        prm = params.with_scalars(transform_prior=params.transform_prior.centered(
            cloud.width, cloud.height))
        idx = build_membership_index(ChainLocator(trace_chains(cloud)), S, shape_normals(S), prm)
        labels = np.full(S.n, prm.deform.zero_label)
        energy = energy_total(labels, inst, pmodel, idx, prm)
    return ParseResult(S, inst, energy, 0, [energy], None)
