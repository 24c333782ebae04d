"""Evaluation reports: per-image point-to-point errors, summary statistics,
CSV export and sorted-error curves."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

PERCENTILES = (10, 25, 50, 75, 90)


@dataclass
class EvalReport:
    per_image_errors: list
    names: list = field(default_factory=list)
    runtime_per_image: list = field(default_factory=list)

    def __post_init__(self):
        self.per_image_errors = [float(e) for e in self.per_image_errors]
        if not self.names:
            self.names = [str(i) for i in range(len(self.per_image_errors))]
        if len(self.names) != len(self.per_image_errors):
            raise ValueError("one name per error required")
        if self.runtime_per_image and len(self.runtime_per_image) != len(self.per_image_errors):
            raise ValueError("one runtime per error required")

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_image_errors)) if self.per_image_errors else math.nan

    @property
    def median(self) -> float:
        return float(np.median(self.per_image_errors)) if self.per_image_errors else math.nan

    @property
    def percentiles(self) -> dict:
        if not self.per_image_errors:
            return {q: math.nan for q in PERCENTILES}
        vals = np.percentile(self.per_image_errors, PERCENTILES)
        return {q: float(v) for q, v in zip(PERCENTILES, vals)}

    @property
    def sorted_curve(self) -> list:
        return sorted(self.per_image_errors)

    def to_csv(self, path) -> None:
        """Long format ``kind,name,value``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["kind", "name", "value"])
            for n, e in zip(self.names, self.per_image_errors):
                w.writerow(["error", n, repr(e)])
            for n, t in zip(self.names, self.runtime_per_image):
                w.writerow(["runtime", n, repr(float(t))])
            w.writerow(["summary", "mean", repr(self.mean)])
            w.writerow(["summary", "median", repr(self.median)])
            for q, v in self.percentiles.items():
                w.writerow(["percentile", f"p{q}", repr(v)])
            for i, v in enumerate(self.sorted_curve):
                w.writerow(["sorted", str(i), repr(v)])


def sorted_error_svg(curves: dict, path, width: int = 480, height: int = 320) -> None:
    """Plot one sorted-error curve per entry of ``curves`` (label -> errors)."""
    colors = ["#1f4e9c", "#c0392b", "#27ae60", "#8e44ad", "#d35400"]
    m = 40
    series = {k: sorted(float(v) for v in vals) for k, vals in curves.items()}
    n = max((len(v) for v in series.values()), default=1)
    top = max((max(v) for v in series.values() if v), default=1.0) or 1.0
    sx = (width - 2 * m) / max(n - 1, 1)
    sy = (height - 2 * m) / top
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<line x1="{m}" y1="{height - m}" x2="{width - m}" y2="{height - m}" stroke="black"/>',
           f'<line x1="{m}" y1="{m}" x2="{m}" y2="{height - m}" stroke="black"/>',
           f'<text x="{width / 2:.1f}" y="{height - 8}" font-size="12" '
           f'text-anchor="middle">image (sorted)</text>',
           f'<text x="12" y="{height / 2:.1f}" font-size="12" text-anchor="middle" '
           f'transform="rotate(-90 12 {height / 2:.1f})">error (px)</text>',
           f'<text x="{m - 4}" y="{m + 4}" font-size="10" text-anchor="end">{top:.1f}</text>',
           f'<text x="{m - 4}" y="{height - m + 4}" font-size="10" text-anchor="end">0</text>']
    for j, (label, vals) in enumerate(series.items()):
        col = colors[j % len(colors)]
        pts = " ".join(f"{m + i * sx:.2f},{height - m - v * sy:.2f}" for i, v in enumerate(vals))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{col}" stroke-width="1.5"/>')
        out.append(f'<text x="{m + 8}" y="{m + 14 * (j + 1)}" font-size="11" '
                   f'fill="{col}">{label}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
