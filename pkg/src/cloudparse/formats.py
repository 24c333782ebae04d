"""Readers and writers for the on-disk formats.

* point clouds: plain PBM (``P1``) or a point list with a
  ``POINTS <n> <width> <height>`` header and one ``x y`` pair per line
* chains: ``CHAIN <id>`` followed by ``x y`` lines
* annotations: ``LANDMARKS <N> <num_segments>``, one ``SEGMENT <start>`` line
  per segment, then N ``x y`` lines
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .geometry import LandmarkShape
from .preprocess import PointCloud


class FormatError(ValueError):
    pass


def _strip_comments(text: str) -> list[str]:
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(line)
    return out


def read_pbm(path) -> PointCloud:
    text = Path(path).read_text()
    lines = _strip_comments(text)
    if not lines or not lines[0].startswith("P1"):
        raise FormatError(f"{path}: not a plain PBM (P1) file")
    tokens = " ".join(lines)[2:].split()
    if len(tokens) < 2:
        raise FormatError(f"{path}: missing PBM size")
    width, height = int(tokens[0]), int(tokens[1])
    bits = [c for c in "".join(tokens[2:]) if c in "01"]
    if len(bits) != width * height:
        raise FormatError(f"{path}: expected {width * height} bits, found {len(bits)}")
    grid = np.array(bits, dtype=np.uint8).reshape(height, width)
    ys, xs = np.nonzero(grid)
    return PointCloud(width, height, np.stack([xs, ys], axis=1))


def write_pbm(cloud: PointCloud, path) -> None:
    grid = cloud.mask().astype(np.uint8)
    rows = [" ".join(map(str, row)) for row in grid]
    Path(path).write_text(f"P1\n{cloud.width} {cloud.height}\n" + "\n".join(rows) + "\n")


def read_point_list(path) -> PointCloud:
    lines = _strip_comments(Path(path).read_text())
    if not lines:
        raise FormatError(f"{path}: empty point list")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "POINTS":
        raise FormatError(f"{path}: expected 'POINTS <n> <width> <height>' header")
    n, width, height = map(int, head[1:])
    body = lines[1:]
    if len(body) != n:
        raise FormatError(f"{path}: header says {n} points, found {len(body)}")
    pts = np.array([list(map(int, ln.split())) for ln in body], dtype=np.int64).reshape(-1, 2)
    return PointCloud(width, height, pts)


def write_point_list(cloud: PointCloud, path) -> None:
    lines = [f"POINTS {len(cloud)} {cloud.width} {cloud.height}"]
    lines += [f"{x} {y}" for x, y in cloud.points]
    Path(path).write_text("\n".join(lines) + "\n")


def read_cloud(path) -> PointCloud:
    path = Path(path)
    with open(path) as fh:
        first = fh.readline().strip()
    if first.startswith("P1"):
        return read_pbm(path)
    return read_point_list(path)


def format_chains(chains) -> str:
    lines = []
    for ch in chains:
        lines.append(f"CHAIN {ch.id}")
        lines += [f"{x} {y}" for x, y in ch.pixels]
    return "\n".join(lines) + "\n"


def parse_chains(text: str):
    from .preprocess import Chain

    chains, cur_id, cur = [], None, []
    for ln in _strip_comments(text):
        if ln.startswith("CHAIN"):
            if cur_id is not None:
                chains.append(Chain(cur_id, np.array(cur, dtype=np.int64).reshape(-1, 2)))
            cur_id, cur = int(ln.split()[1]), []
        else:
            cur.append(list(map(int, ln.split())))
    if cur_id is not None:
        chains.append(Chain(cur_id, np.array(cur, dtype=np.int64).reshape(-1, 2)))
    return chains


def read_annotation(path) -> LandmarkShape:
    lines = _strip_comments(Path(path).read_text())
    if not lines or not lines[0].startswith("LANDMARKS"):
        raise FormatError(f"{path}: expected 'LANDMARKS <N> <num_segments>' header")
    _, n, nseg = lines[0].split()
    n, nseg = int(n), int(nseg)
    starts = []
    for ln in lines[1:1 + nseg]:
        tag, idx = ln.split()
        if tag != "SEGMENT":
            raise FormatError(f"{path}: expected {nseg} SEGMENT lines")
        starts.append(int(idx))
    body = lines[1 + nseg:]
    if len(body) != n:
        raise FormatError(f"{path}: header says {n} landmarks, found {len(body)}")
    pts = np.array([list(map(float, ln.split())) for ln in body])
    try:
        return LandmarkShape(pts, tuple(starts))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_annotation(shape: LandmarkShape, path) -> None:
    lines = [f"LANDMARKS {shape.n} {len(shape.segment_starts)}"]
    lines += [f"SEGMENT {s}" for s in shape.segment_starts]
    lines += [f"{x!r} {y!r}" for x, y in shape.points.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def _finite_or_none(x):
    x = float(x)
    return x if math.isfinite(x) else None


def dump_json(obj, path) -> None:
    # Python's float repr is the shortest string that round-trips exactly.
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def load_json(path):
    return json.loads(Path(path).read_text())


def shape_to_json(shape: LandmarkShape) -> dict:
    return {"points": shape.points.tolist(), "segment_starts": list(shape.segment_starts)}


def shape_from_json(d) -> LandmarkShape:
    return LandmarkShape(np.array(d["points"], dtype=float), tuple(d["segment_starts"]))
