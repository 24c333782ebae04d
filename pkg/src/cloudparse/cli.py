"""Command-line interface: ``cloudparse {train,parse,synth,eval,learn}``.

Exit codes: 0 success, 2 input error, 3 no hypothesis.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bundle import ModelBundle, train_bundle
from .config import CgParams
from .formats import (FormatError, dump_json, load_json, read_annotation, read_cloud,
                      shape_from_json, write_annotation, write_pbm)
from .geometry import avg_point_error
from .learning import TrainingExample, learn_all, write_trace_csv
from .overlay import write_overlay
from .parser import NoHypothesisError, parse, parse_model
from .report import EvalReport, sorted_error_svg
from .shape_model import fit_weighted_pca, synthesize
from .synth import SyntheticSpec, make_image

EXIT_INPUT = 2
EXIT_NO_HYPOTHESIS = 3
CLOUD_SUFFIXES = (".pbm", ".pts")
ANNOTATION_SUFFIX = ".ann"


class InputError(Exception):
    pass


def default_seed() -> int:
    raw = os.environ.get("CLOUDPARSE_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise InputError(f"CLOUDPARSE_SEED must be an integer, got {raw!r}") from None


def _dir(path) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise InputError(f"not a directory: {p}")
    return p


def _load_bundle(path) -> ModelBundle:
    try:
        return ModelBundle.load(path)
    except FileNotFoundError:
        raise InputError(f"model file not found: {path}") from None
    except (KeyError, ValueError, TypeError) as exc:
        raise InputError(f"bad model file {path}: {exc}") from None


def _read_annotations(folder: Path):
    files = sorted(folder.glob("*" + ANNOTATION_SUFFIX))
    shapes = []
    for f in files:
        try:
            s = read_annotation(f)
        except (FormatError, ValueError) as exc:
            raise InputError(f"{f}: {exc}") from None
        if shapes and (s.n != shapes[0].n or s.segment_starts != shapes[0].segment_starts):
            raise InputError(f"{f}: {s.n} landmarks / segments {list(s.segment_starts)}, "
                             f"expected {shapes[0].n} / {list(shapes[0].segment_starts)} "
                             f"(from {files[0].name})")
        shapes.append(s)
    return files, shapes


def _cloud_file(folder: Path, stem: str):
    for suf in CLOUD_SUFFIXES:
        p = folder / (stem + suf)
        if p.exists():
            return p
    return None


def cmd_train(args) -> int:
    files, shapes = _read_annotations(_dir(args.annotations))
    if len(shapes) < args.p + 1:
        raise InputError(f"need at least p+1={args.p + 1} annotations, found {len(shapes)}")
    cg = replace(CgParams(), l_min=args.l_min, l_max=args.l_max)
    try:
        bundle = train_bundle(shapes, args.p, cg)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    bundle.save(args.out)
    lam = bundle.model.lam
    print(f"trained on {len(shapes)} shapes, N={bundle.model.n}, p={bundle.model.p}")
    print("lambda: " + " ".join(f"{v:.6g}" for v in lam))
    rms = []
    for s in shapes:
        fit = fit_weighted_pca(bundle.model, s)
        rms.append(float(np.sqrt(np.mean(np.sum((synthesize(bundle.model, fit).points
                                                  - s.points) ** 2, axis=1)))))
    print(f"reconstruction RMS: mean {np.mean(rms):.3g} max {np.max(rms):.3g}")
    return 0


def cmd_parse(args) -> int:
    bundle = _load_bundle(args.model)
    try:
        cloud = read_cloud(args.cloud)
    except FileNotFoundError:
        raise InputError(f"cloud file not found: {args.cloud}") from None
    except (FormatError, ValueError) as exc:
        raise InputError(f"{args.cloud}: {exc}") from None
    params = bundle.params
    try:
        res = parse(cloud, bundle.model, params, bundle.cg, n_iter=args.n_iter,
                    use_cg2=args.cg2, table=bundle.table, jobs=args.jobs)
    except NoHypothesisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_HYPOTHESIS
    dump_json(res.to_json(), args.out)
    if args.svg:
        backbone = synthesize(parse_model(bundle.model, params), res.inst)
        write_overlay(args.svg, cloud, backbone, res.contour)
    print(f"energy {res.energy:.6g} from candidate {res.candidate_index} "
          f"of {len(res.per_candidate_energies)}")
    return 0


def cmd_synth(args) -> int:
    bundle = _load_bundle(args.model)
    seed = args.seed if args.seed is not None else default_seed()
    try:
        spec = SyntheticSpec(bundle.model, bundle.params, n_images=args.n_images,
                             dropout=args.dropout, clutter_chains=args.clutter,
                             clutter_len=(args.clutter_min, args.clutter_max), seed=seed,
                             width=args.width, height=args.height,
                             pose_jitter=(args.shift, args.scale_jitter, args.rot_jitter))
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(seed).generate_state(args.n_images, dtype=np.uint64)
    images = []
    for i, s in enumerate(seeds):
        im = make_image(spec, int(s))
        stem = f"img_{i:03d}"
        write_pbm(im.cloud, out / f"{stem}.pbm")
        write_annotation(im.truth, out / f"{stem}{ANNOTATION_SUFFIX}")
        images.append({"name": stem, "seed": int(s), "A": im.inst.A.as_dict(),
                       "beta": im.inst.beta.tolist(), "n_points": len(im.cloud)})
    manifest = {"seed": seed, "n_images": args.n_images, "dropout": args.dropout,
                "clutter_chains": args.clutter, "clutter_len": [args.clutter_min, args.clutter_max],
                "width": args.width, "height": args.height,
                "pose_jitter": [args.shift, args.scale_jitter, args.rot_jitter],
                "images": images}
    dump_json(manifest, out / "manifest.json")
    print(f"wrote {args.n_images} images to {out} (seed {seed})")
    return 0


def cmd_eval(args) -> int:
    rdir, adir = _dir(args.results), _dir(args.annotations)
    results = {p.stem: p for p in sorted(rdir.glob("*.json")) if p.name != "manifest.json"}
    anns = {p.stem: p for p in sorted(adir.glob("*" + ANNOTATION_SUFFIX))}
    missing = sorted(set(results) ^ set(anns))
    if missing:
        for m in missing:
            side = "annotation" if m in results else "result"
            print(f"unmatched: {m} (no {side})", file=sys.stderr)
        return EXIT_INPUT
    names, errs = [], []
    for stem in sorted(results):
        try:
            contour = shape_from_json(load_json(results[stem])["contour"])
            truth = read_annotation(anns[stem])
            errs.append(avg_point_error(contour, truth))
        except (KeyError, ValueError, FormatError) as exc:
            raise InputError(f"{stem}: {exc}") from None
        names.append(stem)
    report = EvalReport(errs, names)
    report.to_csv(args.out)
    if args.svg:
        sorted_error_svg({"parse": errs}, args.svg)
    print(f"{len(errs)} images: mean {report.mean:.3f} px, median {report.median:.3f} px")
    return 0


def _training_examples(folder: Path):
    files, shapes = _read_annotations(folder)
    out = []
    for f, s in zip(files, shapes):
        cf = _cloud_file(folder, f.stem)
        if cf is None:
            raise InputError(f"no cloud file for {f.name}")
        try:
            out.append(TrainingExample(read_cloud(cf), s))
        except (FormatError, ValueError) as exc:
            raise InputError(f"{cf}: {exc}") from None
    if not out:
        raise InputError(f"no training examples in {folder}")
    return out


def cmd_learn(args) -> int:
    bundle = _load_bundle(args.model)
    training = _training_examples(_dir(args.train))
    stages = ("cg1", "cg2", "theta") if args.stage == "all" else (args.stage,)
    t0 = time.time()
    res = learn_all(training, bundle.model, bundle.table, bundle.cg, bundle.params,
                    stages=stages, max_sweeps=args.max_sweeps, n_iter=args.n_iter,
                    jobs=args.jobs)
    ModelBundle(bundle.model, res.params, res.cg, bundle.table).save(args.out or args.model)
    write_trace_csv(res.trace_rows(), args.trace)
    for stage, (before, after) in res.losses.items():
        print(f"{stage}: loss {before:.4f} -> {after:.4f}")
    print(f"done in {time.time() - t0:.1f} s")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cloudparse", description="Shape parsing in point clouds.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a PCA shape model from annotations")
    p.add_argument("--annotations", required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--l-min", type=float, default=20.0)
    p.add_argument("--l-max", type=float, default=60.0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("parse", help="parse one point cloud")
    p.add_argument("--cloud", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cg2", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--n-iter", type=int, default=10)
    p.add_argument("--svg")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("synth", help="generate a synthetic benchmark")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-images", type=int, default=50)
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--clutter", type=int, default=10)
    p.add_argument("--clutter-min", type=float, default=20.0)
    p.add_argument("--clutter-max", type=float, default=60.0)
    p.add_argument("--width", type=int, default=160)
    p.add_argument("--height", type=int, default=160)
    p.add_argument("--shift", type=float, default=20.0)
    p.add_argument("--scale-jitter", type=float, default=0.15)
    p.add_argument("--rot-jitter", type=float, default=0.25)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score parse results against annotations")
    p.add_argument("--results", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--svg")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("learn", help="learn parameters on annotated clouds")
    p.add_argument("--train", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--stage", choices=("cg1", "cg2", "theta", "all"), default="all")
    p.add_argument("--out", help="output model file (default: update --model in place)")
    p.add_argument("--trace", default="learn_trace.csv")
    p.add_argument("--max-sweeps", type=int, default=10)
    p.add_argument("--n-iter", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_learn)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
