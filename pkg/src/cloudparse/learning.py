"""Supervised parameter learning by coordinate descent.

Candidate-generator settings are scored by the closest-candidate error,
energy parameters by the mean point-to-point error of the final parse
obtained with single-fragment candidates.  Prepared clouds and candidate
pools are cached, so a sweep over energy parameters only re-runs the
refinement.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .candidates import LengthIntervalTable, closest_candidate_error
from .config import CgParams, EnergyParams
from .geometry import LandmarkShape, avg_point_error
from .parser import NoHypothesisError, generate_candidates, parse, prepare
from .preprocess import PointCloud
from .shape_model import PcaShapeModel

DEFAULT_PENALTY = 100.0


@dataclass(frozen=True)
class TrainingExample:
    cloud: PointCloud
    annotation: LandmarkShape


@dataclass(frozen=True)
class ParamSpec:
    name: str
    initial: float
    increment: float
    lower: float = -math.inf
    upper: float = math.inf
    integer: bool = False

    def __post_init__(self):
        if not self.increment > 0:
            raise ValueError(f"{self.name}: increment must be positive")
        if not self.lower <= self.initial <= self.upper:
            raise ValueError(f"{self.name}: initial value outside its bounds")


@dataclass(frozen=True)
class CoordinateDescentConfig:
    param_specs: tuple
    max_sweeps: int = 10
    loss: str = "final-parse"

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be at least 1")
        if self.loss not in ("final-parse", "closest-candidate"):
            raise ValueError(f"unknown loss {self.loss!r}")
        names = [s.name for s in self.param_specs]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")


@dataclass(frozen=True)
class TraceRow:
    sweep: int
    param: str
    value: float
    loss: float


@dataclass
class DescentResult:
    values: dict
    loss: float
    trace: list
    n_sweeps: int
    n_evaluations: int


def coordinate_descent(config: CoordinateDescentConfig, loss_fn) -> DescentResult:
    """Greedy coordinate descent.

    Each sweep visits the parameters in declared order; for each one the
    value ``+increment`` is tried, then ``-increment``, and the first strict
    improvement that stays within bounds is kept.  Stops after a sweep
    without improvement or after ``max_sweeps``.  ``loss_fn`` receives a
    dict of values; results are memoised.  The trace holds the initial loss
    and one row per accepted step, so it is non-increasing.
    """
    specs = list(config.param_specs)
    values = {s.name: (int(s.initial) if s.integer else float(s.initial)) for s in specs}
    memo = {}

    def evaluate(vals):
        key = tuple(vals[s.name] for s in specs)
        if key not in memo:
            memo[key] = float(loss_fn(dict(vals)))
        return memo[key]

    best = evaluate(values)
    trace = [TraceRow(0, "init", math.nan, best)]
    sweeps = 0
    for sweep in range(1, config.max_sweeps + 1):
        sweeps = sweep
        improved = False
        for s in specs:
            for sign in (1, -1):
                v = values[s.name] + sign * s.increment
                v = int(round(v)) if s.integer else round(v, 10)
                if not s.lower <= v <= s.upper:
                    continue
                trial = dict(values)
                trial[s.name] = v
                loss = evaluate(trial)
                if loss < best:
                    values, best, improved = trial, loss, True
                    trace.append(TraceRow(sweep, s.name, v, loss))
                    break
        if not improved:
            break
    return DescentResult(values, best, trace, sweeps, len(memo))


def write_trace_csv(rows, path) -> None:
    """Loss trace as ``sweep,param,value,loss``.

    ``rows`` holds :class:`TraceRow` items or ``(stage, TraceRow)`` pairs; in
    the latter case a leading ``stage`` column is written.
    """
    rows = list(rows)
    staged = bool(rows) and isinstance(rows[0], tuple)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow((["stage"] if staged else []) + ["sweep", "param", "value", "loss"])
        for item in rows:
            stage, r = item if staged else (None, item)
            cells = [r.sweep, r.param, "" if math.isnan(r.value) else repr(r.value), repr(r.loss)]
            w.writerow(([stage] if staged else []) + cells)


class TrainingCache:
    """Prepared clouds and candidate pools keyed by the settings they depend on."""

    def __init__(self, training):
        self.training = list(training)
        self._prep = {}
        self._cands = {}

    def prepared(self, i: int, cg: CgParams):
        key = (i, cg.l_min, cg.l_max, cg.e_max)
        if key not in self._prep:
            self._prep[key] = prepare(self.training[i].cloud, cg)
        return self._prep[key]

    def candidates(self, i, model, table, cg: CgParams, params: EnergyParams, use_cg2: bool):
        tp = params.transform_prior
        key = (i, cg, use_cg2, tp.s_min, tp.s_max, tp.theta_max)
        if key not in self._cands:
            prep = self.prepared(i, cg)
            self._cands[key] = generate_candidates(prep, model, table, cg, params, use_cg2)
        return self._cands[key]


def _check(training):
    if len(training) < 1:
        raise ValueError("need at least one training example")


def loss_candidates(cg_params: CgParams, training, model: PcaShapeModel,
                    table: LengthIntervalTable, params: EnergyParams, use_cg2: bool = False,
                    penalty: float = DEFAULT_PENALTY, cache: TrainingCache | None = None) -> float:
    """Mean over examples of the closest-candidate error (``penalty`` when an
    example yields no candidate)."""
    cache = cache or TrainingCache(training)
    _check(cache.training)
    errs = []
    for i, ex in enumerate(cache.training):
        cands = cache.candidates(i, model, table, cg_params, params, use_cg2)
        errs.append(closest_candidate_error(model, cands, ex.annotation) if cands else penalty)
    return float(np.mean(errs))


def _parse_error(ex, model, params, cg, n_iter, prep, cands, penalty):
    if not cands:
        return penalty
    try:
        res = parse(ex.cloud, model, params, cg, n_iter=n_iter, prepared=prep, candidates=cands)
    except (NoHypothesisError, ValueError):
        return penalty
    err = avg_point_error(res.contour, ex.annotation)
    return err if math.isfinite(err) else penalty


def _parse_error_star(args):
    return _parse_error(*args)


def loss_parse(params: EnergyParams, training, model: PcaShapeModel, cg: CgParams,
               table: LengthIntervalTable, n_iter: int = 10, penalty: float = DEFAULT_PENALTY,
               cache: TrainingCache | None = None, jobs: int = 1) -> float:
    """Mean point-to-point error of CG1-based parses over the examples.

    A failed parse contributes ``penalty`` instead of aborting.
    """
    cache = cache or TrainingCache(training)
    _check(cache.training)
    jobs_args = []
    for i, ex in enumerate(cache.training):
        prep = cache.prepared(i, cg)
        cands = cache.candidates(i, model, table, cg, params, False)
        jobs_args.append((ex, model, params, cg, n_iter, prep, cands, penalty))
    if jobs > 1 and len(jobs_args) > 1:
        with ProcessPoolExecutor(jobs) as ex:
            errs = list(ex.map(_parse_error_star, jobs_args))
    else:
        errs = [_parse_error_star(a) for a in jobs_args]
    return float(np.mean(errs))


CG1_SPECS = (
    ParamSpec("l_min", 20.0, 5.0, 10.0, 40.0),
    ParamSpec("l_max", 60.0, 10.0, 40.0, 100.0),
    ParamSpec("n_cand1", 200, 50, 50, 200, integer=True),
    ParamSpec("d_nms1", 5.0, 1.0, 1.0, 20.0),
)
CG2_SPECS = (
    ParamSpec("n_cand2", 400, 100, 100, 400, integer=True),
    ParamSpec("d_nms2", 8.0, 1.0, 1.0, 20.0),
    ParamSpec("d_gate", 20.0, 5.0, 5.0, 40.0),
)
THETA_SPECS = (
    ParamSpec("delta", 2.0, 0.5, 0.0, 20.0),
    ParamSpec("alpha", 0.04, 0.01, 0.0, 1.0),
    ParamSpec("rho", 2.0, 0.5, 0.0, 20.0),
    ParamSpec("r", 1.0, 0.25, 0.0, 10.0),
    ParamSpec("p", 8, 1, 1, 64, integer=True),
)
FIXED_GAMMA = 0.1


def specs_from(defaults, current: dict, caps: dict | None = None) -> tuple:
    """Copy of ``defaults`` started at the values in ``current``, with upper
    bounds lowered to ``caps`` where given."""
    out = []
    caps = caps or {}
    for s in defaults:
        upper = min(s.upper, caps.get(s.name, s.upper))
        init = current.get(s.name, s.initial)
        init = min(max(init, s.lower), upper)
        out.append(replace(s, initial=init, upper=upper))
    return tuple(out)


def theta_values(params: EnergyParams, model: PcaShapeModel) -> dict:
    return {
        "delta": params.delta,
        "alpha": float(np.mean(params.deform.alpha)),
        "rho": params.rho,
        "r": params.transform_prior.r,
        "p": model.p if params.n_components is None else params.n_components,
    }


def apply_theta(params: EnergyParams, values: dict) -> EnergyParams:
    kw = dict(values)
    return params.with_scalars(gamma=FIXED_GAMMA, **kw)


@dataclass
class LearnResult:
    cg: CgParams
    params: EnergyParams
    traces: dict = field(default_factory=dict)
    losses: dict = field(default_factory=dict)

    def trace_rows(self):
        """``(stage, TraceRow)`` pairs in stage order."""
        return [(st, r) for st in ("cg1", "cg2", "theta") if st in self.traces
                for r in self.traces[st]]


def learn_all(training, model: PcaShapeModel, table: LengthIntervalTable, cg: CgParams,
              params: EnergyParams, stages=("cg1", "cg2", "theta"), max_sweeps: int = 10,
              n_iter: int = 10, caps: dict | None = None, theta_specs=None,
              penalty: float = DEFAULT_PENALTY, jobs: int = 1) -> LearnResult:
    """Staged learning: CG1 settings, then CG2 settings with CG1 frozen, then
    the energy parameters with CG1 candidates.  ``gamma`` stays at 0.1.

    ``caps`` bounds candidate budgets (for example ``{"n_cand1": 100}``).
    """
    training = list(training)
    if len(training) < 2:
        raise ValueError("learning needs at least two examples")
    unknown = set(stages) - {"cg1", "cg2", "theta"}
    if unknown:
        raise ValueError(f"unknown stages {sorted(unknown)}")
    cache = TrainingCache(training)
    out = LearnResult(cg, params)
    cur = replace(cg)
    caps = dict(caps or {})
    for stage, defaults, use_cg2 in (("cg1", CG1_SPECS, False), ("cg2", CG2_SPECS, True)):
        if stage not in stages:
            continue
        specs = specs_from(defaults, cur.to_json(), caps)
        cfg = CoordinateDescentConfig(specs, max_sweeps, "closest-candidate")

        def loss_fn(vals, use_cg2=use_cg2, base=cur):
            c = replace(base, **vals)
            if c.l_min >= c.l_max:
                return math.inf
            return loss_candidates(c, training, model, table, params, use_cg2, penalty, cache)

        res = coordinate_descent(cfg, loss_fn)
        cur = replace(cur, **res.values)
        out.traces[stage] = res.trace
        out.losses[stage] = (res.trace[0].loss, res.loss)
    out.cg = cur
    if "theta" in stages:
        start = theta_values(params, model)
        specs = specs_from(theta_specs or THETA_SPECS, start, {"p": model.p})
        cfg = CoordinateDescentConfig(specs, max_sweeps, "final-parse")

        def theta_loss(vals):
            return loss_parse(apply_theta(params, vals), training, model, cur, table, n_iter,
                              penalty, cache, jobs)

        res = coordinate_descent(cfg, theta_loss)
        out.params = apply_theta(params, res.values)
        out.traces["theta"] = res.trace
        out.losses["theta"] = (res.trace[0].loss, res.loss)
    return out


def delta_sweep(deltas, training, model, cg, table, params, n_iter=10,
                penalty=DEFAULT_PENALTY, cache=None) -> list[tuple[float, float]]:
    """``(delta, loss_parse)`` over a grid of chain-bonus values."""
    cache = cache or TrainingCache(training)
    return [(float(d), loss_parse(params.with_scalars(delta=float(d)), training, model, cg,
                                  table, n_iter, penalty, cache)) for d in deltas]
