"""CSV/JSON table writers and minimal SVG line and heatmap plots.

Floats are written with ``repr`` so files round-trip exactly and repeated
runs produce identical bytes.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import to_json_dict

__all__ = [
    "write_table",
    "read_table",
    "write_trace",
    "write_map",
    "write_field",
    "write_eigensystem",
    "write_envelope",
    "svg_lines",
    "svg_heatmap",
]


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return str(v)


def write_table(path, columns: Sequence[str], rows: Iterable[Sequence], fmt: str = "csv") -> Path:
    """Write rows as CSV or as a JSON list of records; returns the path used.

    The extension of ``path`` is replaced to match ``fmt``.
    """
    path = Path(path).with_suffix("." + fmt)
    rows = [list(r) for r in rows]
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(columns)
            for r in rows:
                wr.writerow([_cell(v) for v in r])
    elif fmt == "json":
        recs = [dict(zip(columns, (to_json_dict(v) for v in r))) for r in rows]
        path.write_text(json.dumps(recs, indent=1) + "\n", encoding="utf-8")
    else:
        raise ValueError(f"unknown format {fmt!r}; use csv or json")
    return path


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Read a numeric CSV written by :func:`write_table`."""
    with open(path, newline="", encoding="utf-8") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        data = [[float(x) for x in row] for row in rd]
    return header, np.array(data)


def write_trace(path, trace, fmt="csv") -> Path:
    vals = np.asarray(trace.values)
    if np.iscomplexobj(vals):
        return write_table(path, ["freq_mhz", "re", "im"], zip(trace.freq, vals.real, vals.imag), fmt)
    return write_table(path, ["freq_mhz", "value"], zip(trace.freq, vals), fmt)


def write_map(path, freq, sites, values, fmt="csv") -> Path:
    """Frequency rows, one column per site; ``values`` is (n_freq, n_sites)."""
    cols = ["freq_mhz"] + [f"site_{int(s)}" for s in sites]
    rows = (([f] + list(values[i])) for i, f in enumerate(freq))
    return write_table(path, cols, rows, fmt)


def write_field(path, field, fmt="csv") -> Path:
    return write_table(
        path,
        ["x_mm", "re1", "im1", "re2", "im2"],
        zip(field.x, field.comp1.real, field.comp1.imag, field.comp2.real, field.comp2.imag),
        fmt,
    )


def write_eigensystem(path, eig, fmt="csv") -> Path:
    return write_table(
        path,
        ["level", "f_mhz", "classification"],
        zip(range(len(eig.frequencies)), eig.frequencies, eig.classification),
        fmt,
    )


def write_envelope(path, env, fmt="csv") -> Path:
    rows = []
    for j in range(len(env.x_a)):
        rows.append([2 * j, "A", env.x_a[j], env.intensity_a[j]])
        rows.append([2 * j + 1, "B", env.x_b[j], env.intensity_b[j]])
    return write_table(path, ["site", "sublattice", "x_mm", "intensity"], rows, fmt)


# -- SVG --------------------------------------------------------------------

_W, _H, _PAD = 640, 400, 50
_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _scale(v, lo, hi, a, b):
    if hi == lo:
        return (a + b) / 2
    return a + (v - lo) / (hi - lo) * (b - a)


def _frame(title, xlabel, ylabel, xr, yr):
    x0, x1, y0, y1 = _PAD, _W - _PAD / 2, _H - _PAD, _PAD / 2
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" font-family="sans-serif" font-size="11">',
        f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" fill="none" stroke="black"/>',
        f'<text x="{_W / 2}" y="14" text-anchor="middle">{title}</text>',
        f'<text x="{_W / 2}" y="{_H - 10}" text-anchor="middle">{xlabel}</text>',
        f'<text x="12" y="{_H / 2}" transform="rotate(-90 12 {_H / 2})" text-anchor="middle">{ylabel}</text>',
        f'<text x="{x0}" y="{y0 + 14}">{xr[0]:.4g}</text>',
        f'<text x="{x1}" y="{y0 + 14}" text-anchor="end">{xr[1]:.4g}</text>',
        f'<text x="{x0 - 4}" y="{y0}" text-anchor="end">{yr[0]:.4g}</text>',
        f'<text x="{x0 - 4}" y="{y1 + 8}" text-anchor="end">{yr[1]:.4g}</text>',
    ]
    return out, (x0, x1, y0, y1)


def svg_lines(path, x, ys, labels=None, title="", xlabel="", ylabel="", vlines=()) -> Path:
    """Line plot of one or more series sharing ``x``; dashed markers at ``vlines``."""
    x = np.asarray(x, float)
    ys = [np.asarray(y, float) for y in ys]
    xr = (float(x.min()), float(x.max()))
    yr = (min(float(y.min()) for y in ys), max(float(y.max()) for y in ys))
    out, (x0, x1, y0, y1) = _frame(title, xlabel, ylabel, xr, yr)
    for i, y in enumerate(ys):
        pts = " ".join(
            f"{_scale(a, *xr, x0, x1):.2f},{_scale(b, *yr, y0, y1):.2f}" for a, b in zip(x, y)
        )
        out.append(f'<polyline fill="none" stroke="{_COLORS[i % len(_COLORS)]}" points="{pts}"/>')
        if labels:
            out.append(
                f'<text x="{x1 - 4}" y="{y1 + 14 * (i + 1)}" text-anchor="end" '
                f'fill="{_COLORS[i % len(_COLORS)]}">{labels[i]}</text>'
            )
    for v in vlines:
        xv = _scale(v, *xr, x0, x1)
        out.append(f'<line x1="{xv:.2f}" y1="{y0}" x2="{xv:.2f}" y2="{y1}" stroke="gray" stroke-dasharray="4,3"/>')
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return path


def svg_heatmap(path, x, y, values, title="", xlabel="", ylabel="", hlines=(), max_cells=200) -> Path:
    """Grayscale heatmap; ``values`` has shape (len(y), len(x)).

    Rows are block-averaged down to at most ``max_cells`` for file size;
    dashed lines mark ``hlines`` (e.g. window edges).
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    v = np.asarray(values, float)
    if len(y) > max_cells:
        step = int(np.ceil(len(y) / max_cells))
        n = len(y) // step * step
        v = v[:n].reshape(-1, step, v.shape[1]).mean(axis=1)
        y = y[:n].reshape(-1, step).mean(axis=1)
    xr, yr = (float(x.min()), float(x.max())), (float(y.min()), float(y.max()))
    out, (x0, x1, y0, y1) = _frame(title, xlabel, ylabel, xr, yr)
    vmax = float(v.max()) if v.max() > 0 else 1.0
    cw = (x1 - x0) / len(x)
    ch = (y0 - y1) / len(y)
    for i in range(len(y)):
        for j in range(len(x)):
            shade = int(255 * (1 - min(v[i, j] / vmax, 1.0)))
            if shade >= 254:
                continue
            out.append(
                f'<rect x="{x0 + j * cw:.2f}" y="{y0 - (i + 1) * ch:.2f}" width="{cw + 0.3:.2f}" '
                f'height="{ch + 0.3:.2f}" fill="rgb({shade},{shade},{shade})"/>'
            )
    for h in hlines:
        yh = _scale(h, *yr, y0, y1)
        out.append(f'<line x1="{x0}" y1="{yh:.2f}" x2="{x1}" y2="{yh:.2f}" stroke="red" stroke-dasharray="4,3"/>')
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return path
