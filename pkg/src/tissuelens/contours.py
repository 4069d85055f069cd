"""Marching-squares iso-contours over similarity maps, with GeoJSON output.

The field is padded with a below-threshold ring (invalid pixels count as
below threshold too), so every contour is a closed polygon. Segments are
oriented with the above-threshold side on the walker's left; the signed
enclosed area is therefore positive for outer boundaries and negative for
holes, and their sum approximates the above-threshold pixel count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SchemaError


@dataclass(frozen=True)
class Contour:
    points: tuple[tuple[float, float], ...]  # closed: first == last
    area_px2: float  # signed; negative for holes


@dataclass(frozen=True)
class ContourSet:
    contours: tuple[Contour, ...]
    threshold: float
    scale: float = 1.0  # map pixel -> level-0 multiplier
    offset: tuple[float, float] = (0.0, 0.0)  # added in map pixels before scaling

    def level0_polygons(self) -> list[list[tuple[float, float]]]:
        ox, oy = self.offset
        return [
            [((x + ox) * self.scale, (y + oy) * self.scale) for x, y in c.points]
            for c in self.contours
        ]

    def to_geojson(self) -> dict:
        features = []
        for c, poly in zip(self.contours, self.level0_polygons()):
            features.append(
                {
                    "type": "Feature",
                    "geometry": {
                        "type": "Polygon",
                        "coordinates": [[[float(x), float(y)] for x, y in poly]],
                    },
                    "properties": {
                        "similarity_threshold": self.threshold,
                        "area_px2": c.area_px2 * self.scale * self.scale,
                    },
                }
            )
        return {"type": "FeatureCollection", "features": features}


def shoelace_area(points) -> float:
    s = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        s += x0 * y1 - x1 * y0
    return 0.5 * s


def point_in_polygon(x: float, y: float, points) -> bool:
    """Ray-casting test; `points` is a closed ring."""
    inside = False
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        if (y0 > y) != (y1 > y):
            xs = x0 + (y - y0) / (y1 - y0) * (x1 - x0)
            if x < xs:
                inside = not inside
    return inside


def _interp(pa, va, pb, vb, t):
    # canonical corner order (given by the caller) keeps shared-edge vertices
    # bitwise identical between neighboring cells
    f = (t - va) / (vb - va)
    return (pa[0] + f * (pb[0] - pa[0]), pa[1] + f * (pb[1] - pa[1]))


# segment table: case index (TL*8 + TR*4 + BR*2 + BL*1) -> list of directed
# (entry_edge, exit_edge) pairs with the above-threshold region on the left.
# Edges: T, R, B, L. Saddle cases 5 and 10 are resolved by the cell average.
_SEGMENTS = {
    1: [("B", "L")],
    2: [("R", "B")],
    3: [("R", "L")],
    4: [("T", "R")],
    6: [("T", "B")],
    7: [("T", "L")],
    8: [("L", "T")],
    9: [("B", "T")],
    11: [("R", "T")],
    12: [("L", "R")],
    13: [("B", "R")],
    14: [("L", "B")],
}
_SADDLE = {
    5: ([("T", "L"), ("B", "R")], [("T", "R"), ("B", "L")]),  # center above / below
    10: ([("R", "T"), ("L", "B")], [("L", "T"), ("R", "B")]),
}


def contours_of_field(values: np.ndarray, valid: np.ndarray, threshold: float) -> ContourSet:
    """Closed iso-contours at `threshold`; invalid pixels count as below threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise SchemaError(f"threshold must be in [0, 1], got {threshold}")
    field_vals = np.where(valid, values, threshold - 1.0)
    return ContourSet(
        contours=tuple(_march(field_vals, threshold)),
        threshold=threshold,
    )


def _march(values: np.ndarray, t: float) -> list[Contour]:
    h, w = values.shape
    # pad with a below-threshold ring so all contours close; grid point
    # (i, j) of the padded field sits at map coordinate (j - 1, i - 1)
    pad = min(t - 1.0, -1.0)
    g = np.full((h + 2, w + 2), pad)
    g[1:-1, 1:-1] = values

    inside = g >= t
    case = (
        8 * inside[:-1, :-1].astype(np.int8)
        + 4 * inside[:-1, 1:].astype(np.int8)
        + 2 * inside[1:, 1:].astype(np.int8)
        + 1 * inside[1:, :-1].astype(np.int8)
    )
    active = np.argwhere((case != 0) & (case != 15))

    segments: dict[tuple[float, float], list[tuple[float, float]]] = {}

    def emit(start, end):
        segments.setdefault(start, []).append(end)

    for i, j in active:
        x, y = float(j - 1), float(i - 1)
        tl, tr = g[i, j], g[i, j + 1]
        bl, br = g[i + 1, j], g[i + 1, j + 1]
        c = int(case[i, j])
        if c in _SADDLE:
            above, below = _SADDLE[c]
            pairs = above if (tl + tr + bl + br) / 4.0 >= t else below
        else:
            pairs = _SEGMENTS[c]
        # edge crossings in canonical order: left->right, top->bottom
        pts = {}
        if (tl >= t) != (tr >= t):
            pts["T"] = _interp((x, y), tl, (x + 1, y), tr, t)
        if (bl >= t) != (br >= t):
            pts["B"] = _interp((x, y + 1), bl, (x + 1, y + 1), br, t)
        if (tl >= t) != (bl >= t):
            pts["L"] = _interp((x, y), tl, (x, y + 1), bl, t)
        if (tr >= t) != (br >= t):
            pts["R"] = _interp((x + 1, y), tr, (x + 1, y + 1), br, t)
        for a, b in pairs:
            emit(pts[a], pts[b])

    contours = []
    while segments:
        start = next(iter(segments))
        ring = [start]
        cur = start
        while True:
            ends = segments.get(cur)
            if not ends:
                break  # degenerate chain (threshold hits grid values exactly)
            nxt = ends.pop()
            if not ends:
                del segments[cur]
            ring.append(nxt)
            cur = nxt
            if cur == start:
                break
        if len(ring) >= 4 and ring[0] == ring[-1]:
            # drop consecutive duplicates from degenerate crossings
            cleaned = [ring[0]]
            for p in ring[1:]:
                if p != cleaned[-1]:
                    cleaned.append(p)
            if len(cleaned) >= 4:
                # inside-on-left in y-down coordinates makes raw shoelace
                # negative around above-threshold regions; negate so outer
                # boundaries carry positive area
                contours.append(
                    Contour(points=tuple(cleaned), area_px2=-shoelace_area(cleaned))
                )
    return contours
