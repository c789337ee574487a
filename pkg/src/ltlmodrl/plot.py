"""Dependency-free SVG plots of training logs."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

GENERATOR = "ltlmodrl-plot 1"
REQUIRED = ("episode", "total_shaped_reward")


class LogSchemaError(ValueError):
    pass


def read_log(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise LogSchemaError(f"{path}: empty log")
        missing = [c for c in REQUIRED if c not in reader.fieldnames]
        if missing:
            raise LogSchemaError(f"{path}: missing columns {missing}")
        rows = list(reader)
    if not rows:
        raise LogSchemaError(f"{path}: log has no rows")
    try:
        return {c: np.array([float(r[c]) for r in rows]) for c in reader.fieldnames if c}
    except ValueError as exc:
        raise LogSchemaError(f"{path}: non-numeric entry ({exc})") from exc


def moving_average(values: np.ndarray, window: int) -> np.ndarray:
    """Trailing mean over up to ``window`` points; the window is clamped to the data length."""
    window = max(1, min(window, len(values)))
    c = np.concatenate([[0.0], np.cumsum(values)])
    idx = np.arange(1, len(values) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def _panel(x: np.ndarray, ys: Sequence[tuple[np.ndarray, str, str]], top: float, title: str,
           width: float = 640, height: float = 220, margin: float = 50) -> list[str]:
    x0, x1 = float(x.min()), float(x.max())
    allv = np.concatenate([y for y, _, _ in ys])
    y0, y1 = float(allv.min()), float(allv.max())
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    w, h = width - 2 * margin, height - 2 * margin

    def px(v):
        return margin + (v - x0) / (x1 - x0) * w

    def py(v):
        return top + margin + h - (v - y0) / (y1 - y0) * h

    out = [
        f'<text x="{width / 2:.1f}" y="{top + 20:.1f}" text-anchor="middle" font-size="14">{title}</text>',
        f'<rect x="{margin}" y="{top + margin}" width="{w}" height="{h}" fill="none" stroke="#444"/>',
        f'<text x="{margin}" y="{top + height - 15:.1f}" font-size="10">{x0:g}</text>',
        f'<text x="{margin + w:.1f}" y="{top + height - 15:.1f}" text-anchor="end" font-size="10">{x1:g}</text>',
        f'<text x="{margin - 5}" y="{top + margin + h:.1f}" text-anchor="end" font-size="10">{y0:.4g}</text>',
        f'<text x="{margin - 5}" y="{top + margin + 10:.1f}" text-anchor="end" font-size="10">{y1:.4g}</text>',
    ]
    for y, color, name in ys:
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
        out.append(f'<polyline class="{name}" fill="none" stroke="{color}" stroke-width="1" points="{pts}"/>')
    return out


def render_svg(log: dict[str, np.ndarray], window: int = 50, column: str = "total_shaped_reward") -> str:
    ep = log["episode"]
    total = log[column]
    window = max(1, min(window, len(total)))
    avg = moving_average(total, window)
    width, height = 640, 460
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f"<!-- {GENERATOR} -->",
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    parts += _panel(ep, [(avg, "#c0392b", "average")], 0, f"Average reward (window {window})")
    parts += _panel(ep, [(total, "#2c3e50", "total")], 230, "Total reward per episode")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def plot_log(log_path: str | Path, out_path: str | Path, window: int = 50) -> int:
    log = read_log(log_path)
    Path(out_path).write_text(render_svg(log, window))
    return len(log["episode"])
