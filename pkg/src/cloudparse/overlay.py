"""SVG overlay of a parse: input points in gray, PCA backbone in green and the
parse contour in black with dots coloured per segment."""

from __future__ import annotations

from .geometry import LandmarkShape
from .preprocess import PointCloud

SEGMENT_COLORS = ("#e74c3c", "#2980b9", "#f39c12", "#8e44ad", "#16a085", "#d35400")


def _polyline(pts, color, width):
    s = " ".join(f"{x:.3f},{y:.3f}" for x, y in pts)
    return f'<polyline points="{s}" fill="none" stroke="{color}" stroke-width="{width}"/>'


def render_overlay(cloud: PointCloud, backbone: LandmarkShape | None,
                   contour: LandmarkShape | None, scale: float = 3.0) -> str:
    w, h = cloud.width * scale, cloud.height * scale
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:g}" height="{h:g}" '
           f'viewBox="0 0 {cloud.width} {cloud.height}">',
           f'<rect width="{cloud.width}" height="{cloud.height}" fill="white"/>',
           '<g fill="#999999">']
    out += [f'<rect x="{x - 0.35:g}" y="{y - 0.35:g}" width="0.7" height="0.7"/>'
            for x, y in cloud.points]
    out.append("</g>")
    if backbone is not None:
        for lo, hi in backbone.segments():
            out.append(_polyline(backbone.points[lo:hi], "#2ca02c", 0.6))
    if contour is not None:
        for j, (lo, hi) in enumerate(contour.segments()):
            out.append(_polyline(contour.points[lo:hi], "black", 0.6))
            col = SEGMENT_COLORS[j % len(SEGMENT_COLORS)]
            out += [f'<circle cx="{x:.3f}" cy="{y:.3f}" r="0.9" fill="{col}"/>'
                    for x, y in contour.points[lo:hi]]
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_overlay(path, cloud, backbone, contour, scale: float = 3.0) -> None:
    with open(path, "w") as fh:
        fh.write(render_overlay(cloud, backbone, contour, scale))
