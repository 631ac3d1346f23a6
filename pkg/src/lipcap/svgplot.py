"""Static SVG line charts for training traces.

No plotting dependency: the charts are assembled as plain SVG text with a
fixed palette and fixed float formatting, so identical inputs produce
byte-identical documents.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

PANELS = ("norms", "pw", "var", "reduction")

_PALETTE = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
]

_W, _H = 320, 240          # per-panel size
_ML, _MR, _MT, _MB = 52, 12, 28, 34  # margins


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick(v: float) -> str:
    return f"{v:.4g}"


def _panel_series(trace: Dict[str, np.ndarray], panel: str) -> Tuple[List[Tuple[str, np.ndarray, np.ndarray]], str, bool]:
    """Series list (label, x, y), panel title, and whether log-y is natural."""
    steps = trace["step"]
    layers = trace["layer"].astype(int)
    uniq_layers = sorted(set(layers.tolist()))

    def per_layer(col: str):
        out = []
        for l in uniq_layers:
            sel = layers == l
            out.append((f"layer {l}", steps[sel], trace[col][sel]))
        return out

    def global_series(col: str):
        sel = layers == uniq_layers[0]
        return [(col, steps[sel], trace[col][sel])]

    if panel == "norms":
        return per_layer("w_norm"), "weight norms", False
    if panel == "pw":
        return global_series("pw_product"), "weight-norm product", True
    if panel == "var":
        return per_layer("var_mean"), "pre-norm variance (mean)", False
    if panel == "reduction":
        return global_series("inv_sigma_product"), "reduction factor", True
    raise ValueError(f"unknown panel {panel!r}; choose from {PANELS}")


def _render_panel(
    series: List[Tuple[str, np.ndarray, np.ndarray]],
    title: str,
    offset_x: int,
    log_y: bool,
) -> List[str]:
    xs_all = np.concatenate([s[1] for s in series])
    ys_all = np.concatenate([s[2] for s in series])
    if log_y:
        floor = 1e-300
        ys_all = np.log10(np.maximum(np.abs(ys_all), floor))
    x0, x1 = float(xs_all.min()), float(xs_all.max())
    y0, y1 = float(ys_all.min()), float(ys_all.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        pad = max(0.5, abs(y0) * 0.1)
        y0, y1 = y0 - pad, y1 + pad
    plot_w = _W - _ML - _MR
    plot_h = _H - _MT - _MB

    def px(x: float) -> float:
        return offset_x + _ML + (x - x0) / (x1 - x0) * plot_w

    def py(y: float) -> float:
        return _MT + (1.0 - (y - y0) / (y1 - y0)) * plot_h

    out = []
    out.append(
        f'<rect x="{_fmt(offset_x + _ML)}" y="{_fmt(_MT)}" width="{_fmt(plot_w)}" '
        f'height="{_fmt(plot_h)}" fill="none" stroke="#333333" stroke-width="1"/>'
    )
    out.append(
        f'<text x="{_fmt(offset_x + _ML + plot_w / 2)}" y="{_fmt(_MT - 10)}" '
        f'text-anchor="middle" font-size="12" font-family="monospace">{title}'
        f'{" (log10)" if log_y else ""}</text>'
    )
    for frac, val in ((0.0, y1), (1.0, y0)):
        out.append(
            f'<text x="{_fmt(offset_x + _ML - 4)}" y="{_fmt(_MT + frac * plot_h + 4)}" '
            f'text-anchor="end" font-size="10" font-family="monospace">{_tick(val)}</text>'
        )
    for frac, val in ((0.0, x0), (1.0, x1)):
        out.append(
            f'<text x="{_fmt(offset_x + _ML + frac * plot_w)}" y="{_fmt(_MT + plot_h + 14)}" '
            f'text-anchor="middle" font-size="10" font-family="monospace">{_tick(val)}</text>'
        )
    for idx, (label, sx, sy) in enumerate(series):
        color = _PALETTE[idx % len(_PALETTE)]
        vals = sy
        if log_y:
            vals = np.log10(np.maximum(np.abs(sy), 1e-300))
        pts = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in zip(sx, vals))
        out.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        if len(series) > 1:
            out.append(
                f'<text x="{_fmt(offset_x + _ML + plot_w + 2 - 46)}" '
                f'y="{_fmt(_MT + 12 + 11 * idx)}" font-size="9" '
                f'font-family="monospace" fill="{color}">{label}</text>'
            )
    return out


def emit_svg_plot(
    trace: Dict[str, np.ndarray],
    panels: Sequence[str] = PANELS,
    log_y: Optional[bool] = None,
) -> str:
    """Render the selected panels of a trace side by side.

    ``log_y`` overrides the per-panel default (log scale for the product
    panels, linear elsewhere).
    """
    panels = list(panels)
    if not panels:
        raise ValueError("need at least one panel")
    if trace["step"].size == 0:
        raise ValueError("trace has no rows")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W * len(panels)}" '
        f'height="{_H}" viewBox="0 0 {_W * len(panels)} {_H}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    for k, panel in enumerate(panels):
        series, title, log_default = _panel_series(trace, panel)
        parts.extend(
            _render_panel(series, title, k * _W, log_default if log_y is None else log_y)
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
