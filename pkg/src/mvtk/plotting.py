"""Plot-ready output: delimited series files and minimal SVG line charts.

The SVG writer is intentionally tiny and fully deterministic (no timestamps,
no hashed ids), so re-running a pipeline reproduces figures byte-for-byte.
"""

from __future__ import annotations

_WIDTH, _HEIGHT = 480, 320
_MARGIN = 48
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def write_series(path, columns: dict) -> None:
    """Tab-separated columns, one header line; column values must be equal
    length."""
    names = list(columns)
    rows = zip(*(columns[n] for n in names))
    with open(path, "w", encoding="utf-8") as f:
        f.write("\t".join(names) + "\n")
        for row in rows:
            f.write("\t".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if v is None:
        return "nan"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _scale(values, lo, hi, out_lo, out_hi):
    span = hi - lo if hi > lo else 1.0
    return [out_lo + (v - lo) / span * (out_hi - out_lo) for v in values]


def write_line_plot(path, x, series: dict, title: str = "", x_label: str = "", y_label: str = "") -> None:
    """One SVG with a polyline per named series over shared x values."""
    pairs = {name: [(xi, yi) for xi, yi in zip(x, ys) if yi is not None] for name, ys in series.items()}
    all_x = [p[0] for ps in pairs.values() for p in ps] or [0.0, 1.0]
    all_y = [p[1] for ps in pairs.values() for p in ps] or [0.0, 1.0]
    x_lo, x_hi = min(all_x), max(all_x)
    y_lo, y_hi = min(all_y), max(all_y)
    if y_lo == y_hi:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{_WIDTH - 2 * _MARGIN}" '
        f'height="{_HEIGHT - 2 * _MARGIN}" fill="none" stroke="#888"/>',
    ]
    if title:
        parts.append(
            f'<text x="{_WIDTH / 2:g}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="14">{title}</text>'
        )
    if x_label:
        parts.append(
            f'<text x="{_WIDTH / 2:g}" y="{_HEIGHT - 12}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">{x_label}</text>'
        )
    if y_label:
        parts.append(
            f'<text x="14" y="{_HEIGHT / 2:g}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12" '
            f'transform="rotate(-90 14 {_HEIGHT / 2:g})">{y_label}</text>'
        )
    for lo, hi, anchor_x, anchor_y, is_x in (
        (x_lo, x_hi, None, _HEIGHT - _MARGIN + 16, True),
        (y_lo, y_hi, _MARGIN - 6, None, False),
    ):
        for frac in (0.0, 0.5, 1.0):
            value = lo + frac * (hi - lo)
            if is_x:
                px = _MARGIN + frac * (_WIDTH - 2 * _MARGIN)
                parts.append(
                    f'<text x="{px:.2f}" y="{anchor_y}" text-anchor="middle" '
                    f'font-family="sans-serif" font-size="10">{value:.4g}</text>'
                )
            else:
                py = _HEIGHT - _MARGIN - frac * (_HEIGHT - 2 * _MARGIN)
                parts.append(
                    f'<text x="{anchor_x}" y="{py:.2f}" text-anchor="end" '
                    f'font-family="sans-serif" font-size="10">{value:.4g}</text>'
                )

    for idx, (name, ps) in enumerate(pairs.items()):
        if not ps:
            continue
        color = _COLORS[idx % len(_COLORS)]
        xs = _scale([p[0] for p in ps], x_lo, x_hi, _MARGIN, _WIDTH - _MARGIN)
        ys = _scale([p[1] for p in ps], y_lo, y_hi, _HEIGHT - _MARGIN, _MARGIN)
        points = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(xs, ys))
        parts.append(f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(
            f'<text x="{_WIDTH - _MARGIN + 4}" y="{_MARGIN + 14 * idx + 10}" '
            f'font-family="sans-serif" font-size="10" fill="{color}">{name}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(parts) + "\n")
