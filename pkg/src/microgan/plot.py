"""Self-contained SVG line chart of the loss trace."""
from __future__ import annotations

from xml.sax.saxutils import escape

WIDTH, HEIGHT = 720, 420
MARGIN = {"left": 70, "right": 20, "top": 40, "bottom": 55}
SERIES = (("d_loss", "Discriminator loss", "#1f77b4"), ("g_loss", "Generator loss", "#ff7f0e"))


def y_range(values, pad=0.05):
    """Data min/max widened by ``pad`` of the span on each side."""
    lo, hi = min(values), max(values)
    span = hi - lo
    if span == 0:
        span = abs(lo) or 1.0
    return lo - pad * span, hi + pad * span


def _ticks(lo, hi, n=5):
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def render_svg(trace, title="Loss vs. iteration") -> str:
    records = list(trace)
    if not records:
        raise ValueError("cannot plot an empty trace")
    xs = [r.iteration for r in records]
    x_lo, x_hi = min(xs), max(xs)
    if x_hi == x_lo:
        x_hi = x_lo + 1
    y_lo, y_hi = y_range([getattr(r, key) for r in records for key, _, _ in SERIES])

    left, top = MARGIN["left"], MARGIN["top"]
    pw = WIDTH - left - MARGIN["right"]
    ph = HEIGHT - top - MARGIN["bottom"]

    def px(x):
        return left + (x - x_lo) / (x_hi - x_lo) * pw

    def py(y):
        return top + (y_hi - y) / (y_hi - y_lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" data-ymin="{y_lo!r}" data-ymax="{y_hi!r}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" font-size="16">{escape(title)}</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    for v in _ticks(y_lo, y_hi):
        y = py(v)
        out.append(f'<line x1="{left - 4}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="#444"/>')
        out.append(f'<text x="{left - 8}" y="{y + 4:.2f}" text-anchor="end" font-size="11">{v:.3g}</text>')
    for v in _ticks(x_lo, x_hi):
        x = px(v)
        out.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 4}" stroke="#444"/>')
        out.append(f'<text x="{x:.2f}" y="{top + ph + 18}" text-anchor="middle" font-size="11">{v:.0f}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{HEIGHT - 12}" text-anchor="middle" font-size="13">Iteration</text>')
    out.append(f'<text x="18" y="{top + ph / 2}" text-anchor="middle" font-size="13" '
               f'transform="rotate(-90 18 {top + ph / 2})">Loss</text>')
    for i, (key, label, color) in enumerate(SERIES):
        pts = " ".join(f"{px(r.iteration):.2f},{py(getattr(r, key)):.2f}" for r in records)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                   f'data-series="{key}" points="{pts}"/>')
        ly = top + 16 + 18 * i
        lx = left + pw - 170
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 24}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 30}" y="{ly + 4}" font-size="12">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
