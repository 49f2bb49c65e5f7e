"""Top-down schematic snapshots of the intersection as SVG.

Pure string assembly with fixed float formatting, so the same world state
always renders byte-identical output. Lanes are drawn per approach arm,
vehicles as rectangles scaled to their footprint (emergency vehicles get a
highlight stroke), and one signal dot sits at each incoming lane's stop line.
"""

from __future__ import annotations

import math

from .dynamics import JUNCTION_LENGTH, WorldState

CANVAS = 800.0
CENTER = CANVAS / 2.0
ARM_PIXELS = 330.0
LANE_W = 9.0
BOX_MARGIN = 14.0

CLASS_FILL = {
    "regular": "#4a7ebb",
    "police": "#1f3b8c",
    "ambulance": "#f0f0f0",
    "fire_truck": "#c03020",
}

_COMPASS = {"N": (0.0, 1.0), "S": (0.0, -1.0), "E": (-1.0, 0.0), "W": (1.0, 0.0)}


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _directions(world: WorldState) -> dict[str, tuple[float, float]]:
    """Unit vector per approach pointing from the arm tip toward the center."""
    names = [a.name for a in world.topology.approaches]
    if all(n in _COMPASS for n in names):
        return {n: _COMPASS[n] for n in names}
    out = {}
    for i, n in enumerate(names):
        angle = 2.0 * math.pi * i / len(names) + math.pi / 2.0
        out[n] = (-math.cos(angle), math.sin(angle))
    return out


def render_snapshot(world: WorldState, path: str) -> None:
    parts: list[str] = []
    parts.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS:.0f}" '
        f'height="{CANVAS:.0f}" viewBox="0 0 {CANVAS:.0f} {CANVAS:.0f}">')
    parts.append(f'<rect width="{CANVAS:.0f}" height="{CANVAS:.0f}" fill="#20261f"/>')

    dirs = _directions(world)
    max_len = max(max(a.length_in, a.length_out + JUNCTION_LENGTH)
                  for a in world.topology.approaches)
    scale = ARM_PIXELS / max_len
    box_r = BOX_MARGIN + LANE_W * max(
        a.n_in + a.n_out for a in world.topology.approaches) / 2.0
    parts.append(
        f'<rect x="{_fmt(CENTER - box_r)}" y="{_fmt(CENTER - box_r)}" '
        f'width="{_fmt(2 * box_r)}" height="{_fmt(2 * box_r)}" fill="#3a3f38"/>')

    green = (world.signal.green_movements(world.topology)
             if world.signal is not None else frozenset())
    yellowing = frozenset()
    if world.signal is not None and world.signal.in_yellow:
        current = set(world.topology.phase(world.signal.current_phase).movements)
        yellowing = frozenset(current - set(green))

    def lane_geometry(lane):
        d = dirs[lane.approach]
        # right-hand side of the travel direction for incoming, left for outgoing
        px, py = (d[1], -d[0])
        if lane.side == "in":
            offset = (lane.index - 0.5) * LANE_W
        else:
            offset = -(lane.index - 0.5) * LANE_W
        return d, (px * offset, py * offset)

    def point(d, perp, dist):
        return (CENTER - d[0] * (box_r + dist) + perp[0],
                CENTER - d[1] * (box_r + dist) + perp[1])

    for lane in world.in_lanes + world.out_lanes:
        d, perp = lane_geometry(lane)
        span = (lane.length - (JUNCTION_LENGTH if lane.side == "out" else 0.0)) * scale
        x0, y0 = point(d, perp, 0.0)
        x1, y1 = point(d, perp, span)
        parts.append(
            f'<line x1="{_fmt(x0)}" y1="{_fmt(y0)}" x2="{_fmt(x1)}" y2="{_fmt(y1)}" '
            f'stroke="#55594f" stroke-width="{_fmt(LANE_W - 1.5)}"/>')

    for lane in world.in_lanes:
        d, perp = lane_geometry(lane)
        if lane.movement_id in green:
            color = "#3fbf3f"
        elif lane.movement_id in yellowing:
            color = "#e8c33a"
        else:
            color = "#d04038"
        x, y = point(d, perp, -LANE_W * 0.6)
        parts.append(
            f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="3.20" fill="{color}" '
            f'class="signal"/>')

    for lane in world.in_lanes + world.out_lanes:
        d, perp = lane_geometry(lane)
        for veh, pos, _speed, _wait in world.iter_lane_vehicles(lane):
            if lane.side == "in":
                dist = (lane.length - pos) * scale
            else:
                dist = max(0.0, pos - JUNCTION_LENGTH) * scale
            x, y = point(d, perp, dist)
            half = veh.footprint * scale / 2.0
            fill = CLASS_FILL.get(veh.vclass, CLASS_FILL["regular"])
            stroke = ' stroke="#ffb000" stroke-width="1.20"' if veh.is_emergency else ""
            parts.append(
                f'<rect x="{_fmt(x - half)}" y="{_fmt(y - half)}" '
                f'width="{_fmt(2 * half)}" height="{_fmt(2 * half)}" '
                f'fill="{fill}"{stroke} class="veh {veh.vclass}"/>')

    parts.append(
        f'<text x="10" y="22" fill="#cfd4c9" font-family="monospace" font-size="14">'
        f'{world.topology.name} t={_fmt(world.clock)}s vehicles={world.in_world_count()}'
        f'</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(parts))
        f.write("\n")
