"""Deterministic SVG rendering of a map and one trajectory."""

from __future__ import annotations

from typing import Optional, Sequence

from .mdp import GridMap, ObservationSequence
from .observer import PosteriorSnapshot

CELL = 16
START_COLOR = "#2ca02c"
BOGUS_COLOR = "#d62728"
TRUE_COLOR = "#ff7f0e"
BLOCKED_COLOR = "#404040"
PATH_COLOR = "#1f77b4"


def _centre(c) -> str:
    return f"{c[0] * CELL + CELL / 2:g},{c[1] * CELL + CELL / 2:g}"


def render_svg(grid: GridMap, trace: ObservationSequence = ObservationSequence(),
               snapshots: Optional[Sequence[PosteriorSnapshot]] = None,
               true_index: int = 0) -> str:
    """SVG text for ``grid`` with ``trace`` drawn as a polyline.

    When ``snapshots`` are given, each visited state gets a dot whose opacity is
    the observer's true-goal probability after that step.
    """
    if len(trace):
        trace.validate(grid)
    if snapshots is not None and len(snapshots) != len(trace):
        raise ValueError(f"{len(snapshots)} snapshots for a trace of {len(trace)} pairs")
    w, h = grid.width * CELL, grid.height * CELL
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="#ffffff"/>',
        '<g stroke="#e0e0e0" stroke-width="1">',
    ]
    out += [f'<line x1="{x * CELL}" y1="0" x2="{x * CELL}" y2="{h}"/>' for x in range(grid.width + 1)]
    out += [f'<line x1="0" y1="{y * CELL}" x2="{w}" y2="{y * CELL}"/>' for y in range(grid.height + 1)]
    out.append("</g>")
    out.append(f'<g fill="{BLOCKED_COLOR}">')
    for x, y in sorted(grid.blocked, key=lambda c: (c[1], c[0])):
        out.append(f'<rect x="{x * CELL}" y="{y * CELL}" width="{CELL}" height="{CELL}"/>')
    out.append("</g>")
    for i, g in enumerate(grid.goals):
        color = TRUE_COLOR if i == true_index else BOGUS_COLOR
        out.append(f'<rect class="goal" x="{g[0] * CELL}" y="{g[1] * CELL}" width="{CELL}" '
                   f'height="{CELL}" fill="{color}"><title>goal {i}</title></rect>')
    sx, sy = grid.start
    out.append(f'<rect class="start" x="{sx * CELL}" y="{sy * CELL}" width="{CELL}" '
               f'height="{CELL}" fill="{START_COLOR}"/>')
    if len(trace):
        states = trace.states(grid)
        pts = " ".join(_centre(c) for c in states)
        out.append(f'<polyline points="{pts}" fill="none" stroke="{PATH_COLOR}" '
                   f'stroke-width="2" stroke-linejoin="round"/>')
        if snapshots is not None:
            out.append(f'<g fill="{PATH_COLOR}">')
            for c, sn in zip(states[1:], snapshots):
                p = sn.probabilities[true_index]
                cx, cy = _centre(c).split(",")
                out.append(f'<circle cx="{cx}" cy="{cy}" r="{CELL / 5:g}" fill-opacity="{p:.4f}"/>')
            out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
