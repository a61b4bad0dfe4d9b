"""Standalone SVG line plots: embedded polylines, no external plotting
process, no timestamps — reruns are byte-identical."""

from __future__ import annotations

import numpy as np

WIDTH, HEIGHT = 640, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 16, 28, 44
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v: float) -> str:
    return format(float(v), ".6g")


def _ticks(lo: float, hi: float, count: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, count)


def line_plot(path, series, title: str = "", xlabel: str = "", ylabel: str = "",
              logy: bool = False) -> None:
    """Write a line plot.  ``series`` is a list of (x, y, label) triples."""
    cleaned = []
    for x, y, label in series:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if logy:
            keep = y > 0
            x, y = x[keep], np.log10(y[keep])
        keep = np.isfinite(x) & np.isfinite(y)
        cleaned.append((x[keep], y[keep], label))

    xs = np.concatenate([c[0] for c in cleaned if c[0].size]) if cleaned else np.array([0.0])
    ys = np.concatenate([c[1] for c in cleaned if c[1].size]) if cleaned else np.array([0.0])
    if xs.size == 0:
        xs = np.array([0.0, 1.0])
    if ys.size == 0:
        ys = np.array([0.0, 1.0])
    x_lo, x_hi = float(np.min(xs)), float(np.max(xs))
    y_lo, y_hi = float(np.min(ys)), float(np.max(ys))
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo -= pad
    y_hi += pad

    pw = WIDTH - MARGIN_L - MARGIN_R
    ph = HEIGHT - MARGIN_T - MARGIN_B

    def px(v):
        return MARGIN_L + (v - x_lo) / (x_hi - x_lo) * pw

    def py(v):
        return MARGIN_T + (y_hi - v) / (y_hi - y_lo) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" '
        f'fill="none" stroke="#333333" stroke-width="1"/>',
    ]
    if title:
        parts.append(
            f'<text x="{WIDTH // 2}" y="{MARGIN_T - 10}" text-anchor="middle" '
            f'font-family="monospace" font-size="13">{title}</text>'
        )
    for tx in _ticks(x_lo, x_hi):
        parts.append(
            f'<line x1="{_fmt(px(tx))}" y1="{MARGIN_T + ph}" x2="{_fmt(px(tx))}" '
            f'y2="{MARGIN_T + ph + 4}" stroke="#333333"/>'
        )
        parts.append(
            f'<text x="{_fmt(px(tx))}" y="{MARGIN_T + ph + 18}" text-anchor="middle" '
            f'font-family="monospace" font-size="11">{_fmt(tx)}</text>'
        )
    for ty in _ticks(y_lo, y_hi):
        label = f"1e{_fmt(ty)}" if logy else _fmt(ty)
        parts.append(
            f'<line x1="{MARGIN_L - 4}" y1="{_fmt(py(ty))}" x2="{MARGIN_L}" '
            f'y2="{_fmt(py(ty))}" stroke="#333333"/>'
        )
        parts.append(
            f'<text x="{MARGIN_L - 8}" y="{_fmt(py(ty) + 4)}" text-anchor="end" '
            f'font-family="monospace" font-size="11">{label}</text>'
        )
    if xlabel:
        parts.append(
            f'<text x="{WIDTH // 2}" y="{HEIGHT - 8}" text-anchor="middle" '
            f'font-family="monospace" font-size="12">{xlabel}</text>'
        )
    if ylabel:
        parts.append(
            f'<text x="14" y="{MARGIN_T + ph // 2}" text-anchor="middle" '
            f'font-family="monospace" font-size="12" '
            f'transform="rotate(-90 14 {MARGIN_T + ph // 2})">{ylabel}</text>'
        )

    for idx, (x, y, label) in enumerate(cleaned):
        color = PALETTE[idx % len(PALETTE)]
        if x.size:
            points = " ".join(f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(x, y))
            parts.append(
                f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                f'points="{points}"/>'
            )
        if label:
            ly = MARGIN_T + 16 + 16 * idx
            parts.append(
                f'<line x1="{MARGIN_L + pw - 120}" y1="{ly - 4}" '
                f'x2="{MARGIN_L + pw - 96}" y2="{ly - 4}" stroke="{color}" '
                f'stroke-width="1.5"/>'
            )
            parts.append(
                f'<text x="{MARGIN_L + pw - 90}" y="{ly}" font-family="monospace" '
                f'font-size="11">{label}</text>'
            )
    parts.append("</svg>")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")
