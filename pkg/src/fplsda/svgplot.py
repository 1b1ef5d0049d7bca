"""Minimal SVG boxplots for benchmark summaries (no plotting stack needed)."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

PANEL_W, PANEL_H = 300, 260
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 45, 10, 30, 55
COLORS = ("#9ecae1", "#fdae6b", "#a1d99b", "#bcbddc")

PANELS = (("ccr_cv", "CCR (cross-validation)"), ("ccr_test", "CCR (test)"), ("q", "# PLS components"))


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def _panel(summary: list[dict], metric: str, title: str, x0: float) -> list[str]:
    rows = [r for r in summary if r["metric"] == metric]
    out = [f'<g transform="translate({x0:.1f},0)">']
    out.append(f'<text x="{PANEL_W / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>')
    if not rows:
        out.append("</g>")
        return out
    if metric == "q":
        lo = 0.0
        hi = max(r["max"] for r in rows) + 1.0
    else:
        lo = min(0.5, min(r["min"] for r in rows))
        hi = 1.0
    plot_w = PANEL_W - MARGIN_L - MARGIN_R
    plot_h = PANEL_H - MARGIN_T - MARGIN_B

    def ypos(v: float) -> float:
        return MARGIN_T + plot_h * (1 - (v - lo) / (hi - lo))

    out.append(
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#444" stroke-width="1"/>'
    )
    for v in _ticks(lo, hi):
        y = ypos(v)
        out.append(f'<line x1="{MARGIN_L - 4}" y1="{y:.1f}" x2="{MARGIN_L}" y2="{y:.1f}" stroke="#444"/>')
        out.append(
            f'<text x="{MARGIN_L - 6}" y="{y + 4:.1f}" text-anchor="end" font-size="10">{v:.2f}</text>'
        )
    slot = plot_w / len(rows)
    for i, r in enumerate(rows):
        cx = MARGIN_L + slot * (i + 0.5)
        half = slot * 0.25
        color = COLORS[i % len(COLORS)]
        y_min, y_q1, y_med, y_q3, y_max = (ypos(r[k]) for k in ("min", "q1", "median", "q3", "max"))
        out.append(f'<line x1="{cx:.1f}" y1="{y_max:.1f}" x2="{cx:.1f}" y2="{y_q3:.1f}" stroke="#222"/>')
        out.append(f'<line x1="{cx:.1f}" y1="{y_q1:.1f}" x2="{cx:.1f}" y2="{y_min:.1f}" stroke="#222"/>')
        for y in (y_min, y_max):
            out.append(
                f'<line x1="{cx - half / 2:.1f}" y1="{y:.1f}" x2="{cx + half / 2:.1f}" y2="{y:.1f}" stroke="#222"/>'
            )
        out.append(
            f'<rect x="{cx - half:.1f}" y="{y_q3:.1f}" width="{2 * half:.1f}" '
            f'height="{max(y_q1 - y_q3, 0.5):.1f}" fill="{color}" stroke="#222"/>'
        )
        out.append(
            f'<line x1="{cx - half:.1f}" y1="{y_med:.1f}" x2="{cx + half:.1f}" y2="{y_med:.1f}" '
            'stroke="#000" stroke-width="2"/>'
        )
        out.append(
            f'<text x="{cx:.1f}" y="{PANEL_H - MARGIN_B + 16}" text-anchor="middle" '
            f'font-size="10">{escape(r["method"])}</text>'
        )
    out.append("</g>")
    return out


def boxplot_svg(summary: list[dict]) -> str:
    """Three side-by-side panels: CV CCR, test CCR and selected components."""
    width = PANEL_W * len(PANELS)
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{PANEL_H}" '
        f'viewBox="0 0 {width} {PANEL_H}" font-family="sans-serif">',
        f'<rect width="{width}" height="{PANEL_H}" fill="white"/>',
    ]
    for i, (metric, title) in enumerate(PANELS):
        parts.extend(_panel(summary, metric, title, i * PANEL_W))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_boxplots(summary: list[dict], path: str | Path) -> None:
    Path(path).write_text(boxplot_svg(summary), encoding="utf-8")
