"""Sweep the chain bonus delta on the synthetic training suite with all other
parameters at their learned values; write the curve as CSV and SVG."""

import argparse
import csv

import numpy as np

from cloudparse.bench import BenchConfig, benchmark_bundle, benchmark_suite
from cloudparse.learning import TrainingExample, delta_sweep


def write_svg(points, path, width=480, height=320, m=40):
    xs, ys = np.array(points).T
    lo, hi = ys.min(), ys.max()
    span = (hi - lo) or 1.0
    px = m + (xs - xs.min()) / ((xs.max() - xs.min()) or 1.0) * (width - 2 * m)
    py = height - m - (ys - lo) / span * (height - 2 * m)
    pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<polyline points="{pts}" fill="none" stroke="#1f4e9c" stroke-width="1.5"/>']
    out += [f'<circle cx="{a:.2f}" cy="{b:.2f}" r="2.5" fill="#1f4e9c"/>' for a, b in zip(px, py)]
    out += [f'<text x="{width / 2:.0f}" y="{height - 8}" font-size="12" '
            f'text-anchor="middle">delta ({xs.min():g} to {xs.max():g})</text>',
            f'<text x="4" y="{m - 8}" font-size="11">loss {lo:.2f} to {hi:.2f} px</text>',
            "</svg>"]
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-images", type=int, default=20)
    ap.add_argument("--deltas", default="0,1,2,3,4,6,8,12")
    ap.add_argument("--out", default="delta_sweep")
    args = ap.parse_args()

    cfg = BenchConfig()
    bundle = benchmark_bundle(cfg)
    suite = benchmark_suite(bundle, args.n_images, cfg.train_seed, cfg)
    training = [TrainingExample(im.cloud, im.truth) for im in suite]
    deltas = [float(d) for d in args.deltas.split(",")]
    points = delta_sweep(deltas, training, bundle.model, bundle.cg, bundle.table, bundle.params)
    with open(args.out + ".csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["delta", "loss"])
        for d, loss in points:
            w.writerow([d, repr(loss)])
            print(f"delta {d:5.2f}  loss {loss:.3f}")
    write_svg(points, args.out + ".svg")


if __name__ == "__main__":
    main()
