"""CSV data behind the estimator, region and cut pictures.

Only numbers are written; any plotting tool can draw the panels from them.
Row order is deterministic and headers are fixed.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from . import expr as ex
from .cutgen import Cut
from .errors import DimensionTooHigh
from .estimators import estimate
from .strengthen import Box, build_hhat, hhat_eval

ESTIMATE_HEADER = ["x", "f", "under", "over"]
REGION_HEADER = ["x", "y", "h", "h_ave", "hhat", "hhat_tuy"]
CUTS_HEADER = ["label", "method", "a1", "a2", "rhs", "x0", "y0", "x1", "y1"]


def _fmt(v):
    v = float(v)
    if np.isnan(v):
        return "nan"
    if np.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def _write(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([r if isinstance(r, str) else _fmt(r) for r in row])
    return path


def estimate_table(f: ex.Expr, at: float, lo: float = -2.5, hi: float = 2.5, samples: int = 501):
    """Columns x, f, under, over of the estimators of a univariate f at ``at``."""
    if ex.dimension_of(f) > 1:
        raise DimensionTooHigh("estimate data needs a univariate expression")
    pair = estimate(f, np.array([float(at)]))
    X = np.linspace(lo, hi, samples)[:, None]
    with np.errstate(all="ignore"):
        cols = [ex.evaluate(e, X) for e in (f, pair.under, pair.over)]
    return np.column_stack([X[:, 0], *cols])


def _cut_segment(cut: Cut, window: Box):
    """Endpoints of the cut line a.x = rhs clipped to a 2-D window, or None."""
    a, r = np.asarray(cut.coeffs, dtype=float), float(cut.rhs)
    (x0, y0), (x1, y1) = window.lower, window.upper
    pts = []
    if abs(a[1]) > 1e-15:
        for x in (x0, x1):
            pts.append((x, (r - a[0] * x) / a[1]))
    if abs(a[0]) > 1e-15:
        for y in (y0, y1):
            pts.append(((r - a[1] * y) / a[0], y))
    inside = [p for p in pts if x0 - 1e-12 <= p[0] <= x1 + 1e-12 and y0 - 1e-12 <= p[1] <= y1 + 1e-12]
    inside = sorted(set(inside))
    if not inside:
        return None
    return inside[0], inside[-1]


def cut_rows(cuts, window: Box, labels=None):
    rows = []
    for i, cut in enumerate(cuts):
        a = np.zeros(2)
        a[: cut.coeffs.size] = cut.coeffs[:2]
        label = labels[i] if labels else f"cut{i + 1}"
        seg = _cut_segment(Cut(a, cut.rhs), window)
        ends = [np.nan] * 4 if seg is None else [*seg[0], *seg[1]]
        rows.append([label, cut.provenance.get("method", "ic"), a[0], a[1], cut.rhs, *ends])
    return rows


def region_table(h: ex.Expr, at, box: Box, window: Box | None = None, grid: int = 201, hhat_grid=None):
    """Columns x, y, h, h_ave, hhat, hhat_tuy on a grid of ``window`` (default ``box``)."""
    n = box.dim
    if n > 2:
        raise DimensionTooHigh("region data needs dimension <= 2")
    at = np.asarray(at, dtype=float)
    window = box if window is None else window
    pair = estimate(h, at)
    axes = [np.linspace(window.lower[i], window.upper[i], grid) for i in range(n)]
    if n == 1:
        X = axes[0][:, None]
        xy = np.column_stack([axes[0], np.zeros(grid)])
    else:
        gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
        X = np.column_stack([gx.ravel(), gy.ravel()])
        xy = X
    cols = [ex.evaluate(h, X), ex.evaluate(pair.under, X)]
    for tuy in (False, True):
        ev = build_hhat(pair.under, box, hhat_grid, base_point=at, tuy=tuy)
        cols.append(hhat_eval(ev, X))
    return np.column_stack([xy, *cols]), pair


def emit_plot_data(what: str, out_dir, **inputs) -> list:
    """Write the CSV files for ``what`` in {estimate, region, cuts}; returns their paths.

    estimate: f (Expr), at, lo, hi, samples.
    region: h (Expr), at, box, window, grid, cuts (optional).
    cuts: cuts, window.
    """
    out = Path(out_dir)
    if what == "estimate":
        table = estimate_table(inputs["f"], inputs.get("at", 0.0), inputs.get("lo", -2.5),
                               inputs.get("hi", 2.5), inputs.get("samples", 501))
        return [_write(out / "estimate.csv", ESTIMATE_HEADER, table)]
    if what == "region":
        box = inputs["box"]
        window = inputs.get("window") or box
        table, _ = region_table(inputs["h"], inputs["at"], box, window, inputs.get("grid", 201),
                                inputs.get("hhat_grid"))
        paths = [_write(out / "region.csv", REGION_HEADER, table)]
        if inputs.get("cuts"):
            paths.append(_write(out / "cuts.csv", CUTS_HEADER, cut_rows(inputs["cuts"], window, inputs.get("labels"))))
        return paths
    if what == "cuts":
        window = inputs["window"]
        if window.dim > 2:
            raise DimensionTooHigh("cut lines need dimension <= 2")
        return [_write(out / "cuts.csv", CUTS_HEADER, cut_rows(inputs["cuts"], window, inputs.get("labels")))]
    raise ValueError(f"unknown plot data kind {what!r}")


def write_rows(path, header, rows):
    """Generic CSV writer with the same number formatting."""
    return _write(Path(path), header, rows)
