"""Self-contained SVG rendering of accuracy-vs-context curves.

Written by hand so the output bytes depend only on the table, not on a
plotting library's version.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")

WIDTH, HEIGHT = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 60, 190, 30, 50


def _num(v: float) -> str:
    return f"{v:.2f}"


def accuracy_curves_svg(table, title: str | None = None) -> str:
    """Accuracy against k per strategy, with a shaded CI band.

    Rows without an accuracy (skipped or empty) leave a gap in the curve.
    """
    ks = sorted({r.k for r in table.rows}) or [0]
    k_lo, k_hi = min(ks), max(ks)
    span = max(k_hi - k_lo, 1)
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def x(k):
        return LEFT + (k - k_lo) / span * pw

    def y(a):
        return TOP + (1.0 - a) * ph

    title = title or f"{table.meta.get('question', '')} accuracy vs. prior fixations".strip()
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{LEFT + pw / 2:.2f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
    ]
    for tick in range(0, 11):
        a = tick / 10
        out.append(f'<line x1="{LEFT}" y1="{_num(y(a))}" x2="{LEFT + pw}" y2="{_num(y(a))}" stroke="#e5e5e5"/>')
        out.append(f'<text x="{LEFT - 6}" y="{_num(y(a) + 4)}" text-anchor="end">{a:.1f}</text>')
    for k in ks:
        out.append(f'<text x="{_num(x(k))}" y="{TOP + ph + 16}" text-anchor="middle">{k}</text>')
    out.append(f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    out.append(f'<text x="{LEFT + pw / 2:.2f}" y="{HEIGHT - 12}" text-anchor="middle">prior fixations in context (k)</text>')
    out.append(f'<text transform="translate(16 {TOP + ph / 2:.2f}) rotate(-90)" text-anchor="middle">accuracy</text>')

    for i, strategy in enumerate(table.strategies):
        color = PALETTE[i % len(PALETTE)]
        rows = sorted((r for r in table.rows if r.strategy == strategy), key=lambda r: r.k)
        segments, cur = [], []
        for r in rows:
            if r.accuracy is None:
                if cur:
                    segments.append(cur)
                cur = []
            else:
                cur.append(r)
        if cur:
            segments.append(cur)
        for seg in segments:
            upper = " ".join(f"{_num(x(r.k))},{_num(y(r.ci_high))}" for r in seg)
            lower = " ".join(f"{_num(x(r.k))},{_num(y(r.ci_low))}" for r in reversed(seg))
            out.append(f'<polygon points="{upper} {lower}" fill="{color}" fill-opacity="0.18" stroke="none"/>')
            pts = " ".join(f"{_num(x(r.k))},{_num(y(r.accuracy))}" for r in seg)
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
            for r in seg:
                out.append(f'<circle cx="{_num(x(r.k))}" cy="{_num(y(r.accuracy))}" r="2.5" fill="{color}"/>')
        ly = TOP + 14 + 16 * i
        lx = LEFT + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 24}" y="{ly}">{escape(strategy)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
