"""Run the synthetic benchmark: CG1 and CG2 parses plus the ASM baseline on
the test suite; write per-method reports and a sorted-error plot."""

import argparse
import math
import time
from pathlib import Path

import numpy as np

from cloudparse.bench import BenchConfig, benchmark_bundle, benchmark_suite, evaluate_image
from cloudparse.report import EvalReport, sorted_error_svg


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-images", type=int, default=50)
    ap.add_argument("--out", default="bench_out")
    ap.add_argument("--n-iter", type=int, default=10)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    cfg = BenchConfig()
    bundle = benchmark_bundle(cfg)
    suite = benchmark_suite(bundle, args.n_images, cfg.test_seed, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    rows = []
    for i, im in enumerate(suite):
        o = evaluate_image(im, bundle, n_iter=args.n_iter, jobs=args.jobs)
        rows.append(o)
        print(f"{i:3d} cand {o.closest_cg1:6.2f} {o.closest_cg2:6.2f}  parse {o.parse_cg1:6.2f} "
              f"{o.parse_cg2:6.2f}  asm {o.asm:6.2f}  {o.seconds:5.1f} s", flush=True)
    names = [f"img_{i:03d}" for i in range(len(rows))]
    secs = [o.seconds for o in rows]
    curves = {}
    for key, label in (("closest_cg1", "closest CG1"), ("closest_cg2", "closest CG2"),
                       ("parse_cg1", "parse CG1"), ("parse_cg2", "parse CG2"), ("asm", "ASM")):
        errs = [getattr(o, key) for o in rows]
        EvalReport(errs, names, secs).to_csv(out / f"{key}.csv")
        finite = [e for e in errs if math.isfinite(e)]
        print(f"{label:12s} mean {np.mean(errs):6.2f}  median {np.median(errs):6.2f}  "
              f"failed {len(errs) - len(finite)}")
        if key.startswith("parse") or key == "asm":
            curves[label] = finite
    sorted_error_svg(curves, out / "sorted_errors.svg")
    print(f"total {time.time() - t0:.0f} s")


if __name__ == "__main__":
    main()
