"""Grouped bar chart (clean / adversarial / defended accuracy per attack) as plain SVG."""
from __future__ import annotations

from xml.sax.saxutils import escape

_COLORS = {"clean": "#4c72b0", "adversarial": "#c44e52", "defended": "#55a868"}
_W, _H = 120, 200  # per-group width, plot height
_LEFT, _TOP, _BOTTOM = 50, 30, 40


def accuracy_svg(clean: float, attacks: dict) -> str:
    """Render accuracies from the report's ``attacks`` section; output is byte-stable."""
    names = list(attacks)
    width = _LEFT + _W * max(len(names), 1) + 130
    height = _TOP + _H + _BOTTOM
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="11">',
        f'<line x1="{_LEFT}" y1="{_TOP}" x2="{_LEFT}" y2="{_TOP + _H}" stroke="black"/>',
        f'<line x1="{_LEFT}" y1="{_TOP + _H}" x2="{width - 130}" y2="{_TOP + _H}" stroke="black"/>',
    ]
    for tick in range(0, 11, 2):
        y = _TOP + _H - _H * tick / 10
        out.append(f'<text x="{_LEFT - 6}" y="{y + 4:.1f}" text-anchor="end">{tick / 10:.1f}</text>')
    bar = 28
    for g, name in enumerate(names):
        entry = attacks[name]
        values = [("clean", clean), ("adversarial", entry["adversarial_accuracy"])]
        if "defense" in entry:
            values.append(("defended", entry["defense"]["post_defense_adv_accuracy"]))
        x0 = _LEFT + g * _W + 12
        for b, (kind, v) in enumerate(values):
            h = _H * v
            x = x0 + b * (bar + 4)
            out.append(f'<rect x="{x}" y="{_TOP + _H - h:.2f}" width="{bar}" height="{h:.2f}" '
                       f'fill="{_COLORS[kind]}"/>')
            out.append(f'<text x="{x + bar / 2:.1f}" y="{_TOP + _H - h - 3:.2f}" text-anchor="middle" '
                       f'font-size="9">{v:.3f}</text>')
        out.append(f'<text x="{x0 + 46}" y="{_TOP + _H + 18}" text-anchor="middle">{escape(name)}</text>')
    lx = width - 120
    for i, (kind, color) in enumerate(_COLORS.items()):
        y = _TOP + 14 * i
        out.append(f'<rect x="{lx}" y="{y}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="{lx + 14}" y="{y + 9}">{kind}</text>')
    out.append(f'<text x="{_LEFT}" y="16">Detector accuracy before/after attack and after adversarial training</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
