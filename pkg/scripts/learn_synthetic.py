"""Learn candidate-generator and energy parameters on the synthetic training
suite, print the learned values and write the loss traces."""

import argparse
import time
from dataclasses import asdict

from cloudparse.bench import BenchConfig, benchmark_bundle, benchmark_suite
from cloudparse.config import CgParams
from cloudparse.learning import TrainingExample, learn_all, write_trace_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-images", type=int, default=20)
    ap.add_argument("--stages", default="cg1,cg2,theta")
    ap.add_argument("--max-sweeps", type=int, default=10)
    ap.add_argument("--trace", default="learn_trace.csv")
    args = ap.parse_args()

    cfg = BenchConfig()
    stages = tuple(args.stages.split(","))
    # without the CG stages, start from the frozen learned CG settings
    cg = CgParams() if {"cg1", "cg2"} & set(stages) else None
    bundle = benchmark_bundle(cfg, cg=cg, theta=None)
    suite = benchmark_suite(bundle, args.n_images, cfg.train_seed, cfg)
    training = [TrainingExample(im.cloud, im.truth) for im in suite]
    t0 = time.time()
    res = learn_all(training, bundle.model, bundle.table, bundle.cg, bundle.params,
                    stages=stages, max_sweeps=args.max_sweeps)
    for stage, (before, after) in res.losses.items():
        print(f"{stage}: loss {before:.3f} -> {after:.3f}")
    print("cg:", asdict(res.cg))
    prm = res.params
    print("theta: delta=%g alpha=%g rho=%g r=%g p=%s" % (
        prm.delta, prm.deform.alpha[0], prm.rho, prm.transform_prior.r, prm.n_components))
    write_trace_csv(res.trace_rows(), args.trace)
    print(f"{time.time() - t0:.0f} s")


if __name__ == "__main__":
    main()
