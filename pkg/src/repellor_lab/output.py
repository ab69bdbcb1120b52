"""CSV artifacts, run manifests, plain-text reports and small static SVG plots."""
from __future__ import annotations

import csv
import hashlib
import json
import os
from xml.sax.saxutils import escape

import numpy as np


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_report(path, title, items) -> None:
    """``key: value`` lines under a title; nested dicts become indented blocks."""
    lines = [title, "=" * len(title)]

    def emit(d, indent):
        for k, v in d.items():
            if isinstance(v, dict):
                lines.append(f"{indent}{k}:")
                emit(v, indent + "  ")
            else:
                lines.append(f"{indent}{k}: {fmt(v)}")

    emit(items, "")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_manifest(out_dir, config_text, config_hash, seed, version, command, wall_clock, files) -> str:
    manifest = {
        "command": command,
        "config": config_text,
        "config_hash": config_hash,
        "seed": seed,
        "version": version,
        "wall_clock_seconds": wall_clock,
        "files": {name: sha256_file(os.path.join(out_dir, name)) for name in sorted(files)},
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _colour(t: float) -> str:
    # white -> dark blue
    t = min(max(t, 0.0), 1.0)
    r = int(round(255 * (1 - 0.85 * t)))
    g = int(round(255 * (1 - 0.75 * t)))
    b = int(round(255 * (1 - 0.35 * t)))
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap_svg(path, grid, title="", cell=6) -> None:
    grid = np.asarray(grid, dtype=float)
    ny, nx = grid.shape
    top = 24 if title else 4
    w, h = nx * cell + 8, ny * cell + top + 4
    peak = grid.max() if grid.size and grid.max() > 0 else 1.0
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">']
    if title:
        parts.append(f'<text x="4" y="16" font-family="monospace" font-size="12">{escape(title)}</text>')
    for i in range(ny):
        for j in range(nx):
            y = top + (ny - 1 - i) * cell
            parts.append(f'<rect x="{4 + j * cell}" y="{y}" width="{cell}" height="{cell}" '
                         f'fill="{_colour(grid[i, j] / peak)}"/>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


def line_svg(path, x, series: dict, title="", logy=False, width=480, height=300) -> None:
    x = np.asarray(x, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    if logy:
        ys = {k: np.log10(np.where(np.abs(v) > 0, np.abs(v), np.nan)) for k, v in ys.items()}
    allv = np.concatenate([v[np.isfinite(v)] for v in ys.values()] + [np.zeros(0)])
    lo, hi = (allv.min(), allv.max()) if allv.size else (0.0, 1.0)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    x0, x1 = (x.min(), x.max()) if x.max() > x.min() else (x.min() - 0.5, x.max() + 0.5)
    pad = 40

    def sx(v):
        return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(v):
        return height - pad - (v - lo) / (hi - lo) * (height - 2 * pad)

    palette = ["#1f4e99", "#b03a2e", "#1e8449", "#7d3c98"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
             'fill="none" stroke="#888"/>']
    if title:
        parts.append(f'<text x="{pad}" y="20" font-family="monospace" font-size="12">{escape(title)}</text>')
    parts.append(f'<text x="4" y="{pad + 4}" font-family="monospace" font-size="10">{hi:.3g}</text>')
    parts.append(f'<text x="4" y="{height - pad}" font-family="monospace" font-size="10">{lo:.3g}</text>')
    for idx, (name, v) in enumerate(ys.items()):
        col = palette[idx % len(palette)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, v) if np.isfinite(b))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{col}" stroke-width="1.5"/>')
        parts.append(f'<text x="{width - pad - 100}" y="{pad + 14 * (idx + 1)}" font-family="monospace" '
                     f'font-size="10" fill="{col}">{escape(name)}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
