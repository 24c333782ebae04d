"""The bundled horse-like synthetic benchmark: model, image suites and the
parameters learned on its training suite."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

from .bundle import ModelBundle, default_energy_params, train_bundle
from .candidates import cg1, cg2, closest_candidate_error
from .config import CgParams, EnergyParams
from .geometry import avg_point_error
from .parser import asm_baseline, parse, prepare
from .synth import SyntheticSpec, generate_suite, horse_like_training_set

# Produced by scripts/learn_synthetic.py on the training suite (seed 101).
LEARNED_CG = {"l_min": 10.0, "l_max": 50.0, "n_cand1": 200, "d_nms1": 2.0,
              "n_cand2": 400, "d_nms2": 1.0, "d_gate": 15.0}
LEARNED_THETA = {"delta": 3.0, "alpha": 0.05, "rho": 2.0, "r": 1.0, "p": 7}


@dataclass(frozen=True)
class BenchConfig:
    n_landmarks: int = 48
    n_train_shapes: int = 40
    p: int = 8
    shape_seed: int = 1
    width: int = 160
    height: int = 160
    pose_jitter: tuple[float, float, float] = (20.0, 0.15, 0.25)
    dropout: float = 0.2
    clutter_chains: int = 10
    clutter_len: tuple[float, float] = (20.0, 60.0)
    train_seed: int = 101
    test_seed: int = 2024


def benchmark_bundle(cfg: BenchConfig = BenchConfig(), cg: CgParams | None = None,
                     theta: dict | None = LEARNED_THETA) -> ModelBundle:
    """PCA model trained on the horse-like shapes with the learned candidate
    settings unless ``cg`` is given; energy parameters set to ``theta``
    (``None`` keeps the untuned defaults)."""
    ann = horse_like_training_set(cfg.n_train_shapes, cfg.n_landmarks, seed=cfg.shape_seed,
                                  width=cfg.width, height=cfg.height)
    bundle = train_bundle(ann, cfg.p, cg or CgParams(**LEARNED_CG))
    if theta:
        bundle = bundle.with_params(bundle.params.with_scalars(**theta))
    return bundle


def generator_params(bundle: ModelBundle) -> EnergyParams:
    """Deformation and coefficient prior used to sample images: the untuned
    horse values, independent of whatever parameters the parser uses."""
    return default_energy_params(bundle.model)


def benchmark_spec(bundle: ModelBundle, n_images: int, seed: int,
                   cfg: BenchConfig = BenchConfig(), **overrides) -> SyntheticSpec:
    kw = dict(n_images=n_images, dropout=cfg.dropout, clutter_chains=cfg.clutter_chains,
              clutter_len=cfg.clutter_len, seed=seed, width=cfg.width, height=cfg.height,
              pose_jitter=cfg.pose_jitter)
    kw.update(overrides)
    return SyntheticSpec(bundle.model, generator_params(bundle), **kw)


def benchmark_suite(bundle: ModelBundle, n_images: int, seed: int,
                    cfg: BenchConfig = BenchConfig(), **overrides):
    return generate_suite(benchmark_spec(bundle, n_images, seed, cfg, **overrides))


@dataclass
class ImageOutcome:
    """Errors of one benchmark image (``inf`` when no hypothesis survives)."""

    closest_cg1: float
    closest_cg2: float
    parse_cg1: float
    parse_cg2: float
    asm: float
    seconds: float


def evaluate_image(image, bundle: ModelBundle, n_iter: int = 10, asm_updates: int = 20,
                   jobs: int = 1) -> ImageOutcome:
    """CG1 and CG2 closest-candidate and parse errors plus the ASM baseline.

    CG2 extends the CG1 candidate list of the same image, so both parses
    share preprocessing.
    """
    t0 = time.perf_counter()
    model, cg, params = bundle.model, bundle.cg, bundle.params
    prep = prepare(image.cloud, cg)
    prior = params.transform_prior.centered(image.cloud.width, image.cloud.height)
    c1 = cg1(prep.fragments, model, bundle.table, cg, prior)
    c2 = cg2(c1, prep.fragments, model, cg, prior) if c1 else []
    out = []
    for cands in (c1, c2):
        out.append(closest_candidate_error(model, cands, image.truth))
    for cands in (c1, c2):
        if not cands:
            out.append(math.inf)
            continue
        res = parse(image.cloud, model, params, cg, n_iter=n_iter, prepared=prep,
                    candidates=cands, jobs=jobs)
        out.append(avg_point_error(res.contour, image.truth))
    asm = asm_baseline(image.cloud, model, n_updates=asm_updates,
                       n_components=params.n_components)
    out.append(avg_point_error(asm.contour, image.truth))
    return ImageOutcome(*out, time.perf_counter() - t0)
