"""A trained model together with its energy parameters, candidate-generator
settings and length-interval table, stored as one JSON document."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .candidates import LengthIntervalTable, learn_length_intervals
from .config import CgParams, EnergyParams, TransformPriorParams
from .formats import dump_json, load_json
from .shape_model import PcaShapeModel, train_pca


@dataclass(frozen=True)
class ModelBundle:
    model: PcaShapeModel
    params: EnergyParams
    cg: CgParams
    table: LengthIntervalTable

    def to_json(self) -> dict:
        base = replace(self.model, extras={})
        d = base.to_json()
        d["params"] = self.params.to_json()
        d["cg"] = self.cg.to_json()
        d["length_table"] = self.table.to_json()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ModelBundle":
        model = PcaShapeModel.from_json(d)
        return cls(model, EnergyParams.from_json(d["params"]), CgParams.from_json(d["cg"]),
                   LengthIntervalTable.from_json(d["length_table"]))

    def save(self, path) -> None:
        dump_json(self.to_json(), path)

    @classmethod
    def load(cls, path) -> "ModelBundle":
        return cls.from_json(load_json(path))

    def with_params(self, params=None, cg=None) -> "ModelBundle":
        return replace(self, params=params or self.params, cg=cg or self.cg)


def default_energy_params(model: PcaShapeModel, **kw) -> EnergyParams:
    lo, hi = model.scale_range
    tp = TransformPriorParams(s_min=0.75 * lo, s_max=1.3 * hi, theta_max=math.pi / 6,
                              r=kw.pop("r", 1.0))
    return EnergyParams.default(model.n, model.segment_starts, transform_prior=tp, **kw)


def train_bundle(annotations, p: int, cg: CgParams | None = None, **param_kw) -> ModelBundle:
    annotations = list(annotations)
    cg = cg or CgParams()
    model = train_pca(annotations, p)
    table = learn_length_intervals(annotations, cg.l_min, cg.l_max)
    return ModelBundle(model, default_energy_params(model, **param_kw), cg, table)
