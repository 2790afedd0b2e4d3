"""Deterministic SVG and CSV export of scenes and orbits.

Arcs are emitted as true SVG arc path commands so the drawing stays exact at
any zoom; no timestamps or other nondeterministic metadata are written.
"""
from __future__ import annotations

import csv
import io
import math

import numpy as np

from .flow import ArcPiece, Orbit, SegmentPiece
from .geometry import Disk, Scene


def _fmt(x):
    return f"{x:.6f}"


def _arc_path(piece: ArcPiece):
    """SVG path for a circular arc, split so no single A-command spans 2 pi."""
    r = piece.radius
    c = piece.center
    a0 = math.atan2(piece.q0[1] - c[1], piece.q0[0] - c[0])
    total = piece.dangle
    sweep = 1 if total > 0 else 0  # y-flip applied via transform keeps sense
    parts = [f"M {_fmt(piece.q0[0])} {_fmt(piece.q0[1])}"]
    n_splits = max(1, int(abs(total) // (math.pi * 0.9)) + 1)
    for k in range(1, n_splits + 1):
        a = a0 + total * k / n_splits
        x = c[0] + r * math.cos(a)
        y = c[1] + r * math.sin(a)
        large = 0  # each sub-arc spans < pi
        parts.append(f"A {_fmt(r)} {_fmt(r)} 0 {large} {sweep} {_fmt(x)} {_fmt(y)}")
    return " ".join(parts)


def scene_svg(scene: Scene, orbits=(), size=800, pad=1.5):
    """Standalone SVG document showing the bumps and any number of orbits."""
    pts = []
    for b in scene.bumps:
        big = b.shape.radius if isinstance(b.shape, Disk) else b.shape.semi_axes[0]
        c = b.center
        pts.append(c - big)
        pts.append(c + big)
    for orbit in orbits:
        for p in orbit.pieces:
            pts.append(np.asarray(p.q0))
            pts.append(np.asarray(p.q1))
    pts = np.array(pts)
    lo = pts.min(axis=0) - pad
    hi = pts.max(axis=0) + pad
    span = float(max(hi - lo))
    scale = size / span
    w = (hi[0] - lo[0]) * scale
    h = (hi[1] - lo[1]) * scale

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(w)}" '
        f'height="{_fmt(h)}" viewBox="0 0 {_fmt(w)} {_fmt(h)}">',
        # flip y so the mathematical orientation is upright
        f'<g transform="translate(0,{_fmt(h)}) scale({_fmt(scale)},-{_fmt(scale)}) '
        f'translate({_fmt(-lo[0])},{_fmt(-lo[1])})">',
    ]
    for b in scene.bumps:
        c = b.center
        if isinstance(b.shape, Disk):
            lines.append(
                f'<circle cx="{_fmt(c[0])}" cy="{_fmt(c[1])}" '
                f'r="{_fmt(b.shape.radius)}" fill="#d0d7e0" stroke="#304050" '
                f'stroke-width="{_fmt(1.5 / scale)}"/>')
        else:
            a, bb = b.shape.semi_axes
            deg = math.degrees(b.shape.angle)
            lines.append(
                f'<ellipse cx="{_fmt(c[0])}" cy="{_fmt(c[1])}" rx="{_fmt(a)}" '
                f'ry="{_fmt(bb)}" transform="rotate({_fmt(deg)} {_fmt(c[0])} '
                f'{_fmt(c[1])})" fill="#d0d7e0" stroke="#304050" '
                f'stroke-width="{_fmt(1.5 / scale)}"/>')
    for orbit in orbits:
        for p in orbit.pieces:
            if isinstance(p, SegmentPiece):
                lines.append(
                    f'<line x1="{_fmt(p.q0[0])}" y1="{_fmt(p.q0[1])}" '
                    f'x2="{_fmt(p.q1[0])}" y2="{_fmt(p.q1[1])}" '
                    f'stroke="#1040a0" stroke-width="{_fmt(1.0 / scale)}" '
                    f'fill="none"/>')
            else:
                lines.append(
                    f'<path d="{_arc_path(p)}" stroke="#a03010" '
                    f'stroke-width="{_fmt(1.0 / scale)}" fill="none"/>')
    lines.append("</g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def orbit_csv(orbit: Orbit, resolution=0.05):
    """CSV trajectory sampled at the given arclength resolution.

    Columns: piece_index, type, t_start, t_end, x, y, vx, vy, bump.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["piece_index", "type", "t_start", "t_end",
                     "x", "y", "vx", "vy", "bump"])
    for i, p in enumerate(orbit.pieces):
        if isinstance(p, SegmentPiece):
            length = p.length
            n = max(2, int(math.ceil(length / resolution)) + 1)
            d = (np.asarray(p.q1) - np.asarray(p.q0)) / length
            for t in np.linspace(0.0, length, n):
                q = np.asarray(p.q0) + t * d
                writer.writerow([i, "segment", f"{p.t0:.12g}", f"{p.t1:.12g}",
                                 f"{q[0]:.12g}", f"{q[1]:.12g}",
                                 f"{d[0]:.12g}", f"{d[1]:.12g}", ""])
        else:
            arclen = abs(p.dangle) * p.radius
            n = max(2, int(math.ceil(arclen / resolution)) + 1)
            a0 = math.atan2(p.q0[1] - p.center[1], p.q0[0] - p.center[0])
            sense = 1.0 if p.dangle > 0 else -1.0
            for frac in np.linspace(0.0, 1.0, n):
                a = a0 + p.dangle * frac
                q = p.center + p.radius * np.array([math.cos(a), math.sin(a)])
                v = sense * np.array([-math.sin(a), math.cos(a)])
                writer.writerow([i, "arc", f"{p.t0:.12g}", f"{p.t1:.12g}",
                                 f"{q[0]:.12g}", f"{q[1]:.12g}",
                                 f"{v[0]:.12g}", f"{v[1]:.12g}", p.bump])
    return buf.getvalue()
