"""Hand-rolled SVG output: silhouettes and force-deflection plots.

No plotting dependency: geometry is emitted as filled paths (boundary loops
with even-odd holes), curves as polylines over simple axes.  Plots embed
their data table in a <metadata> block so every figure carries its numbers.
"""

from __future__ import annotations

import io

import numpy as np

_HEADER = (
    '<?xml version="1.0" encoding="UTF-8"?>\n'
    '<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
    'viewBox="{x0:.3f} {y0:.3f} {dx:.3f} {dy:.3f}">\n'
)


def _fmt(x: float) -> str:
    return f"{x:.6g}"


class SvgCanvas:
    """Collects shapes in model coordinates (mm, y up) and writes one file."""

    def __init__(self):
        self.items: list[str] = []
        self.meta: list[str] = []
        self.lo = np.array([np.inf, np.inf])
        self.hi = np.array([-np.inf, -np.inf])

    def _grow(self, pts):
        pts = np.atleast_2d(pts)
        self.lo = np.minimum(self.lo, pts.min(axis=0))
        self.hi = np.maximum(self.hi, pts.max(axis=0))

    def path(self, rings, fill="#888888", stroke="#222222", width=0.25, opacity=1.0):
        """Filled region from one or more closed rings (even-odd holes)."""
        d = []
        for ring in rings:
            ring = np.asarray(ring, float)
            self._grow(ring)
            d.append(
                "M "
                + " L ".join(f"{_fmt(p[0])},{_fmt(-p[1])}" for p in ring)
                + " Z"
            )
        self.items.append(
            f'<path d="{" ".join(d)}" fill="{fill}" fill-rule="evenodd" '
            f'stroke="{stroke}" stroke-width="{width}" fill-opacity="{opacity}"/>'
        )

    def polyline(self, pts, stroke="#0055aa", width=0.5):
        pts = np.asarray(pts, float)
        self._grow(pts)
        body = " ".join(f"{_fmt(p[0])},{_fmt(-p[1])}" for p in pts)
        self.items.append(
            f'<polyline points="{body}" fill="none" stroke="{stroke}" '
            f'stroke-width="{width}"/>'
        )

    def text(self, pos, s, size=3.0, color="#000000"):
        self._grow(np.array([pos]))
        self.items.append(
            f'<text x="{_fmt(pos[0])}" y="{_fmt(-pos[1])}" font-size="{size}" '
            f'font-family="monospace" fill="{color}">{s}</text>'
        )

    def metadata(self, lines):
        self.meta.extend(lines)

    def tostring(self) -> str:
        lo, hi = self.lo, self.hi
        if not np.all(np.isfinite(lo)):
            lo, hi = np.zeros(2), np.ones(2)
        pad = 0.05 * max(hi[0] - lo[0], hi[1] - lo[1], 1.0)
        x0, y0 = lo[0] - pad, -(hi[1] + pad)
        dx, dy = (hi[0] - lo[0]) + 2 * pad, (hi[1] - lo[1]) + 2 * pad
        scale = max(dx, dy)
        w = 800.0 * dx / scale
        h = 800.0 * dy / scale
        out = io.StringIO()
        out.write(_HEADER.format(w=w, h=h, x0=x0, y0=y0, dx=dx, dy=dy))
        if self.meta:
            out.write("<metadata><![CDATA[\n")
            for ln in self.meta:
                out.write(ln + "\n")
            out.write("]]></metadata>\n")
        for item in self.items:
            out.write(item + "\n")
        out.write("</svg>\n")
        return out.getvalue()

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.tostring())


def silhouette_svg(
    mesh,
    displacement=None,
    surfaces=(),
    show_undeformed=True,
    path=None,
):
    """Mechanism and workpiece silhouettes, optionally deformed.

    The undeformed outline is drawn in light grey under the deformed one,
    mirroring the usual before/after figures.
    """
    cv = SvgCanvas()

    def rings(disp):
        x = mesh.nodes if disp is None else mesh.nodes + disp
        by_body: dict[int, list[np.ndarray]] = {}
        for lp in mesh.loops:
            by_body.setdefault(lp.body, []).append(x[lp.nodes])
        return by_body

    if show_undeformed and displacement is not None:
        for body, rr in rings(None).items():
            cv.path(rr, fill="#cccccc", stroke="#999999", opacity=0.7)
    for body, rr in rings(displacement).items():
        fill = "#7a93b5" if body == 0 else "#c9a86a"
        cv.path(rr, fill=fill, stroke="#1a1a1a")
    for srf in surfaces:
        cv.path([srf.polygon()], fill="#111111", stroke="#111111")
    if path is not None:
        cv.write(path)
    return cv


def curves_svg(
    curves: list[tuple[str, np.ndarray, np.ndarray]],
    xlabel="delta_in (mm)",
    ylabel="F (N)",
    path=None,
    marker_y=None,
):
    """Overlaid x-y curves with axes, legend and an embedded data table."""
    palette = ["#0055aa", "#aa3300", "#118833", "#886600", "#551188", "#007788"]
    cv = SvgCanvas()
    xs = np.concatenate([np.asarray(c[1], float) for c in curves]) if curves else np.array([0, 1])
    ys = np.concatenate([np.asarray(c[2], float) for c in curves]) if curves else np.array([0, 1])
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(min(ys.min(), 0.0)), float(ys.max())
    if x_hi - x_lo < 1e-12:
        x_hi = x_lo + 1.0
    if y_hi - y_lo < 1e-12:
        y_hi = y_lo + 1.0
    W, H = 100.0, 70.0

    def tx(x):
        return (x - x_lo) / (x_hi - x_lo) * W

    def ty(y):
        return (y - y_lo) / (y_hi - y_lo) * H

    cv.polyline([(0, 0), (W, 0)], stroke="#000000", width=0.4)
    cv.polyline([(0, 0), (0, H)], stroke="#000000", width=0.4)
    cv.text((W * 0.4, -6.0), xlabel, size=3.2)
    cv.text((-2.0, H + 3.0), ylabel, size=3.2)
    for k, frac in enumerate((0.0, 0.5, 1.0)):
        cv.text((tx(x_lo + frac * (x_hi - x_lo)), -3.0), _fmt(x_lo + frac * (x_hi - x_lo)), 2.4)
        cv.text((-9.0, ty(y_lo + frac * (y_hi - y_lo))), _fmt(y_lo + frac * (y_hi - y_lo)), 2.4)
    if marker_y is not None:
        cv.polyline([(0, ty(marker_y)), (W, ty(marker_y))], stroke="#888888", width=0.25)
    meta = ["data:"]
    for k, (label, x, y) in enumerate(curves):
        pts = np.column_stack([tx(np.asarray(x, float)), ty(np.asarray(y, float))])
        cv.polyline(pts, stroke=palette[k % len(palette)], width=0.6)
        cv.text((W + 2.0, H - 4.0 * k), label, size=2.8, color=palette[k % len(palette)])
        meta.append(f"curve {label}")
        for xi, yi in zip(x, y):
            meta.append(f"{xi!r} {yi!r}")
    cv.metadata(meta)
    if path is not None:
        cv.write(path)
    return cv
