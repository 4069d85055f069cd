"""Region and lens geometry in pixel coordinates.

All lens geometry lives in level-0 pixel units unless stated otherwise;
regions carry their pyramid level explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BoundsError, SchemaError

CIRCLE = "circle"
RECTANGLE = "rectangle"


@dataclass(frozen=True)
class RegionRect:
    """Half-open pixel rectangle [x0, x1) x [y0, y1) at a pyramid level."""

    level: int
    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.level < 0:
            raise BoundsError(f"level must be >= 0, got {self.level}")
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise BoundsError(
                f"empty or inverted region ({self.x0},{self.y0})..({self.x1},{self.y1})"
            )

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0


@dataclass(frozen=True)
class LensGeometry:
    """Circle or rectangle lens footprint, center (cx, cy) in level-0 pixels."""

    shape: str
    cx: float
    cy: float
    radius_px: float = 0.0
    half_w: float = 0.0
    half_h: float = 0.0

    def __post_init__(self):
        if self.shape == CIRCLE:
            if self.radius_px < 0:
                raise SchemaError(f"radius_px must be >= 0, got {self.radius_px}")
        elif self.shape == RECTANGLE:
            if self.half_w < 0 or self.half_h < 0:
                raise SchemaError(
                    f"half extents must be >= 0, got ({self.half_w}, {self.half_h})"
                )
        else:
            raise SchemaError(f"shape must be '{CIRCLE}' or '{RECTANGLE}', got {self.shape!r}")

    @staticmethod
    def circle(cx: float, cy: float, radius_px: float) -> "LensGeometry":
        return LensGeometry(CIRCLE, float(cx), float(cy), radius_px=float(radius_px))

    @staticmethod
    def rectangle(cx: float, cy: float, half_w: float, half_h: float) -> "LensGeometry":
        return LensGeometry(
            RECTANGLE, float(cx), float(cy), half_w=float(half_w), half_h=float(half_h)
        )

    @property
    def half_extents(self) -> tuple[float, float]:
        if self.shape == CIRCLE:
            return self.radius_px, self.radius_px
        return self.half_w, self.half_h

    def bbox(self) -> tuple[float, float, float, float]:
        hw, hh = self.half_extents
        return self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh

    def contains(self, xs, ys):
        """Closed membership test; accepts scalars or arrays, returns bool of same shape."""
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        if self.shape == CIRCLE:
            return (xs - self.cx) ** 2 + (ys - self.cy) ** 2 <= self.radius_px**2
        return (np.abs(xs - self.cx) <= self.half_w) & (np.abs(ys - self.cy) <= self.half_h)

    def area_px2(self) -> float:
        if self.shape == CIRCLE:
            return math.pi * self.radius_px**2
        return (2.0 * self.half_w) * (2.0 * self.half_h)

    def scaled(self, factor: float) -> "LensGeometry":
        """Same footprint expressed in a coordinate system scaled by `factor`."""
        if self.shape == CIRCLE:
            return LensGeometry.circle(self.cx * factor, self.cy * factor, self.radius_px * factor)
        return LensGeometry.rectangle(
            self.cx * factor, self.cy * factor, self.half_w * factor, self.half_h * factor
        )

    def translated(self, dx: float, dy: float) -> "LensGeometry":
        if self.shape == CIRCLE:
            return LensGeometry.circle(self.cx + dx, self.cy + dy, self.radius_px)
        return LensGeometry.rectangle(self.cx + dx, self.cy + dy, self.half_w, self.half_h)

    def to_json_dict(self) -> dict:
        d = {"shape": self.shape, "cx": self.cx, "cy": self.cy}
        if self.shape == CIRCLE:
            d["radius_px"] = self.radius_px
        else:
            d["half_w"] = self.half_w
            d["half_h"] = self.half_h
        return d

    @staticmethod
    def from_json_dict(d: dict) -> "LensGeometry":
        if not isinstance(d, dict):
            raise SchemaError("geometry: expected object")
        shape = d.get("shape")
        if shape == CIRCLE:
            for k in ("cx", "cy", "radius_px"):
                if not isinstance(d.get(k), (int, float)):
                    raise SchemaError(f"geometry.{k}: expected number")
            return LensGeometry.circle(d["cx"], d["cy"], d["radius_px"])
        if shape == RECTANGLE:
            for k in ("cx", "cy", "half_w", "half_h"):
                if not isinstance(d.get(k), (int, float)):
                    raise SchemaError(f"geometry.{k}: expected number")
            return LensGeometry.rectangle(d["cx"], d["cy"], d["half_w"], d["half_h"])
        raise SchemaError(f"geometry.shape: expected '{CIRCLE}' or '{RECTANGLE}', got {shape!r}")
