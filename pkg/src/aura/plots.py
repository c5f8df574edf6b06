"""Standalone SVG charts written by hand (no plotting dependency)."""

from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

PANEL_W, PANEL_H, PAD = 480, 200, 36
COLORS = {"truth": "#222222", "forecast": "#d62728", "normal": "#1f77b4", "abnormal": "#d62728",
          "threshold": "#2ca02c", "alpha_hist": "#1f77b4", "alpha_fut": "#ff7f0e"}


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class _Frame:
    """Maps data coordinates into one panel's pixel box."""

    def __init__(self, x0, y0, xlim, ylim):
        self.x0, self.y0 = x0, y0
        lo, hi = ylim
        if hi - lo < 1e-12:
            lo, hi = lo - 0.5, hi + 0.5
        self.xlim, self.ylim = xlim, (lo, hi)

    def px(self, x):
        a, b = self.xlim
        return self.x0 + PAD + (x - a) / max(b - a, 1e-12) * (PANEL_W - 2 * PAD)

    def py(self, y):
        lo, hi = self.ylim
        return self.y0 + PANEL_H - PAD - (y - lo) / (hi - lo) * (PANEL_H - 2 * PAD)

    def axes(self, title: str) -> list[str]:
        left, right = self.x0 + PAD, self.x0 + PANEL_W - PAD
        top, bottom = self.y0 + PAD, self.y0 + PANEL_H - PAD
        lo, hi = self.ylim
        return [
            f'<rect x="{left}" y="{top}" width="{right - left}" height="{bottom - top}" '
            'fill="none" stroke="#999999" stroke-width="0.5"/>',
            f'<text x="{left}" y="{top - 8}" font-size="12">{escape(title)}</text>',
            f'<text x="{left - 4}" y="{bottom}" font-size="9" text-anchor="end">{lo:.3g}</text>',
            f'<text x="{left - 4}" y="{top + 8}" font-size="9" text-anchor="end">{hi:.3g}</text>',
        ]

    def polyline(self, xs, ys, cls: str) -> str:
        pts = " ".join(f"{_fmt(self.px(x))},{_fmt(self.py(y))}" for x, y in zip(xs, ys))
        return f'<polyline class="{cls}" points="{pts}" fill="none" stroke="{COLORS[cls]}" stroke-width="1.5"/>'


def _document(width: int, height: int, body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">')
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *body, "</svg>"]) + "\n"


def forecast_svg(samples: Sequence[dict]) -> str:
    """One panel per sample: ground truth (history + horizon) and the forecast over the horizon.

    Each sample dict needs ``history``, ``target`` and ``forecast``; ``id`` is used as the title.
    """
    body = []
    for k, s in enumerate(samples):
        hist, target, pred = (np.asarray(s[key], dtype=float) for key in ("history", "target", "forecast"))
        T, S = len(hist), len(target)
        truth = np.concatenate([hist, target])
        values = np.concatenate([truth, pred])
        fr = _Frame(0, k * PANEL_H, (0, T + S - 1), (values.min(), values.max()))
        body += fr.axes(f"{s.get('id', k)} ({s.get('label', '')})")
        body.append(fr.polyline(range(T + S), truth, "truth"))
        body.append(fr.polyline(range(T, T + S), pred, "forecast"))
    return _document(PANEL_W, PANEL_H * max(len(samples), 1), body)


def score_svg(scores: Sequence[dict], threshold: float) -> str:
    """Residual score per window (circles coloured by label) with the threshold as a line."""
    values = np.array([s["score"] for s in scores], dtype=float)
    top = max(values.max() if values.size else 1.0, threshold)
    fr = _Frame(0, 0, (0, max(len(scores) - 1, 1)), (0.0, top))
    body = fr.axes("residual scores")
    for i, s in enumerate(scores):
        lab = "abnormal" if s["label"] == "abnormal" else "normal"
        body.append(f'<circle class="{lab}" cx="{_fmt(fr.px(i))}" cy="{_fmt(fr.py(s["score"]))}" r="1.6" '
                    f'fill="{COLORS[lab]}"/>')
    y = _fmt(fr.py(threshold))
    body.append(f'<line class="threshold" x1="{PAD}" x2="{PANEL_W - PAD}" y1="{y}" y2="{y}" '
                f'stroke="{COLORS["threshold"]}" stroke-dasharray="4 3"/>')
    return _document(PANEL_W, PANEL_H, body)


def histogram_svg(series: dict[str, np.ndarray], bins: int = 20, lim=(0.0, 1.0), title: str = "") -> str:
    """Overlaid histograms on shared bins, one translucent bar set per entry."""
    edges = np.linspace(lim[0], lim[1], bins + 1)
    counts = {k: np.histogram(np.asarray(v, dtype=float), bins=edges)[0] for k, v in series.items()}
    top = max((c.max() for c in counts.values()), default=1)
    fr = _Frame(0, 0, (edges[0], edges[-1]), (0.0, float(max(top, 1))))
    body = fr.axes(title or " vs ".join(series))
    for name, c in counts.items():
        color = COLORS.get(name, "#7f7f7f")
        for lo, hi, n in zip(edges[:-1], edges[1:], c):
            if n == 0:
                continue
            x, w = fr.px(lo), fr.px(hi) - fr.px(lo)
            y = fr.py(n)
            body.append(f'<rect class="{name}" x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" '
                        f'height="{_fmt(fr.py(0) - y)}" fill="{color}" fill-opacity="0.5"/>')
    for j, name in enumerate(counts):
        body.append(f'<text x="{PANEL_W - PAD - 90}" y="{PAD + 14 + 14 * j}" font-size="11" '
                    f'fill="{COLORS.get(name, "#7f7f7f")}">{escape(name)}</text>')
    return _document(PANEL_W, PANEL_H, body)
