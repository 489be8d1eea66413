"""Static replay rendering for episode traces.

ASCII mode writes one animation file with a text frame per step; SVG mode
writes one frame file per step. Frame 0 shows the starting configuration,
frame t the state after step t-1.
"""

from __future__ import annotations

import os
import string

from .sim import EpisodeTrace

_GLYPHS = string.digits + string.ascii_uppercase

CELL_PX = 24


def _frames(trace: EpisodeTrace):
    """Yield (t, positions, goals) with frame 0 taken from the header."""
    header = trace.header
    yield 0, [tuple(p) for p in header["starts"]], [tuple(g) for g in header["goals"]]
    for step in trace.steps:
        yield step.t + 1, [tuple(p) for p in step.positions], [tuple(g) for g in step.goals]


def ascii_frame(trace: EpisodeTrace, positions, goals, t: int) -> str:
    header = trace.header
    h, w, map_str = header["height"], header["width"], header["map"]
    rows = [list(map_str[r * w: (r + 1) * w]) for r in range(h)]
    for g in goals:
        if rows[g[0]][g[1]] == ".":
            rows[g[0]][g[1]] = "+"
    for i, p in enumerate(positions):
        rows[p[0]][p[1]] = _GLYPHS[i] if i < len(_GLYPHS) else "?"
    return f"t={t}\n" + "\n".join("".join(r) for r in rows)


def ascii_animation(trace: EpisodeTrace) -> str:
    frames = [ascii_frame(trace, pos, goals, t) for t, pos, goals in _frames(trace)]
    return "\n\n".join(frames) + "\n"


def _agent_color(i: int, n: int) -> str:
    hue = int(360 * i / max(1, n))
    return f"hsl({hue}, 70%, 45%)"


def svg_frame(trace: EpisodeTrace, positions, goals, t: int) -> str:
    header = trace.header
    h, w, map_str = header["height"], header["width"], header["map"]
    n = len(positions)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w * CELL_PX}" '
        f'height="{h * CELL_PX + CELL_PX}" viewBox="0 0 {w * CELL_PX} {h * CELL_PX + CELL_PX}">',
        f'<rect width="{w * CELL_PX}" height="{h * CELL_PX}" fill="#f6f6f6"/>',
    ]
    for r in range(h):
        for c in range(w):
            if map_str[r * w + c] == "#":
                parts.append(
                    f'<rect x="{c * CELL_PX}" y="{r * CELL_PX}" '
                    f'width="{CELL_PX}" height="{CELL_PX}" fill="#333"/>'
                )
    for i, g in enumerate(goals):
        parts.append(
            f'<rect x="{g[1] * CELL_PX + 3}" y="{g[0] * CELL_PX + 3}" '
            f'width="{CELL_PX - 6}" height="{CELL_PX - 6}" fill="none" '
            f'stroke="{_agent_color(i, n)}" stroke-width="2"/>'
        )
    for i, p in enumerate(positions):
        cx = p[1] * CELL_PX + CELL_PX // 2
        cy = p[0] * CELL_PX + CELL_PX // 2
        parts.append(
            f'<circle cx="{cx}" cy="{cy}" r="{CELL_PX // 2 - 3}" '
            f'fill="{_agent_color(i, n)}"/>'
        )
        parts.append(
            f'<text x="{cx}" y="{cy + 4}" font-size="10" text-anchor="middle" '
            f'fill="#fff" font-family="monospace">{i}</text>'
        )
    parts.append(
        f'<text x="4" y="{h * CELL_PX + CELL_PX - 8}" font-size="12" '
        f'font-family="monospace" fill="#000">t={t}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_trace(trace: EpisodeTrace, fmt: str, out_dir) -> list[str]:
    """Write frames to out_dir; returns the created file paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if fmt == "ascii":
        path = os.path.join(out_dir, "animation.txt")
        with open(path, "w") as f:
            f.write(ascii_animation(trace))
        written.append(path)
    elif fmt == "svg":
        for t, positions, goals in _frames(trace):
            path = os.path.join(out_dir, f"frame_{t:04d}.svg")
            with open(path, "w") as f:
                f.write(svg_frame(trace, positions, goals, t))
            written.append(path)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return written
