"""Nadir camera geometry and lawn-mower waypoint grids."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .field import Rect

SURVEY = "survey"
INSPECT = "inspect"

# Relative slack when counting how many footprints fit along a side.
_FIT_EPS = 1e-9


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class CameraModel:
    sensor_width_mm: float = 6.17
    focal_length_mm: float = 3.6
    image_width_px: int = 4000
    image_height_px: int = 3000

    def __post_init__(self):
        for name in ("sensor_width_mm", "focal_length_mm", "image_width_px", "image_height_px"):
            if not getattr(self, name) > 0:
                raise GeometryError(f"{name} must be > 0")


def gsd_at_altitude(cam: CameraModel, h: float) -> float:
    """Ground sampling distance in m/px for altitude ``h`` in meters."""
    if not h > 0:
        raise GeometryError(f"altitude must be > 0, got {h}")
    gsd_mm = (h * 1000.0) * cam.sensor_width_mm / (cam.focal_length_mm * cam.image_width_px)
    return gsd_mm / 1000.0


def altitude_at_gsd(cam: CameraModel, gsd: float) -> float:
    if not gsd > 0:
        raise GeometryError(f"gsd must be > 0, got {gsd}")
    return (gsd * 1000.0) * cam.focal_length_mm * cam.image_width_px / cam.sensor_width_mm / 1000.0


@dataclass(frozen=True)
class GsdLadder:
    """Candidate GSDs in m/px, coarse to fine. ``rungs[0]`` is the survey GSD."""

    rungs: tuple[float, ...] = (0.030, 0.025, 0.020, 0.015, 0.010)

    def __post_init__(self):
        rungs = tuple(float(g) for g in self.rungs)
        if not rungs:
            raise GeometryError("ladder needs at least one rung")
        if any(g <= 0 for g in rungs):
            raise GeometryError("ladder rungs must be > 0")
        if any(a <= b for a, b in zip(rungs, rungs[1:])):
            raise GeometryError(f"ladder rungs must be strictly decreasing, got {rungs}")
        object.__setattr__(self, "rungs", rungs)

    @property
    def survey(self) -> float:
        return self.rungs[0]

    @property
    def finest(self) -> float:
        return self.rungs[-1]

    @property
    def finer(self) -> tuple[float, ...]:
        return self.rungs[1:]

    def index(self, gsd: float) -> int:
        for i, g in enumerate(self.rungs):
            if math.isclose(g, gsd, rel_tol=1e-12, abs_tol=0.0):
                return i
        raise GeometryError(f"gsd {gsd} is not a ladder rung")

    def __len__(self):
        return len(self.rungs)


@dataclass(frozen=True)
class Waypoint:
    x: float
    y: float
    h: float
    gsd: float
    level: str = SURVEY

    @classmethod
    def at_gsd(cls, cam: CameraModel, x: float, y: float, gsd: float, level: str = SURVEY) -> "Waypoint":
        return cls(float(x), float(y), altitude_at_gsd(cam, gsd), float(gsd), level)

    def __post_init__(self):
        if not self.h > 0:
            raise GeometryError("waypoint altitude must be > 0")
        if self.level not in (SURVEY, INSPECT):
            raise GeometryError(f"unknown waypoint level {self.level!r}")

    @property
    def position(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.h)


def footprint_size(cam: CameraModel, gsd: float) -> tuple[float, float]:
    return (gsd * cam.image_width_px, gsd * cam.image_height_px)


def footprint(cam: CameraModel, wp: Waypoint) -> Rect:
    fw, fh = footprint_size(cam, wp.gsd)
    return Rect(wp.x - fw / 2, wp.y - fh / 2, wp.x + fw / 2, wp.y + fh / 2)


def _tile_centers(lo: float, length: float, size: float) -> list[float]:
    n = max(1, math.ceil(length / size - _FIT_EPS))
    centers = [lo + size / 2 + i * size for i in range(n)]
    # inward shift keeps the last tile inside the area
    centers[-1] = min(centers[-1], lo + length - size / 2)
    return centers


def _serpentine(xs: Sequence[float], ys: Sequence[float], reverse_x: bool = False) -> list[tuple[float, float]]:
    out = []
    for j, y in enumerate(ys):
        row = list(xs)
        if (j % 2 == 1) != reverse_x:
            row.reverse()
        out.extend((x, y) for x in row)
    return out


def survey_grid(field_extent: Rect, cam: CameraModel, gsd_survey: float) -> list[Waypoint]:
    """Boustrophedon survey waypoints, starting at the south-west corner heading east."""
    fw, fh = footprint_size(cam, gsd_survey)
    if fw > field_extent.width * (1 + _FIT_EPS) or fh > field_extent.height * (1 + _FIT_EPS):
        raise GeometryError(
            f"footprint {fw:.3f} x {fh:.3f} m exceeds field {field_extent.width:.3f} x {field_extent.height:.3f} m")
    xs = _tile_centers(field_extent.x0, field_extent.width, fw)
    ys = _tile_centers(field_extent.y0, field_extent.height, fh)
    return [Waypoint.at_gsd(cam, x, y, gsd_survey, SURVEY) for x, y in _serpentine(xs, ys)]


def inspection_grid(parent: Waypoint, cam: CameraModel, gsd_child: float,
                    entry: tuple[float, float]) -> list[Waypoint]:
    """Lawn-mower grid at ``gsd_child`` covering the parent footprint.

    The path starts at the grid corner nearest to ``entry``.
    """
    if not gsd_child < parent.gsd:
        raise GeometryError(f"child gsd {gsd_child} must be finer than parent gsd {parent.gsd}")
    area = footprint(cam, parent)
    fw, fh = footprint_size(cam, gsd_child)
    xs = _tile_centers(area.x0, area.width, fw)
    ys = _tile_centers(area.y0, area.height, fh)
    ex, ey = entry
    if abs(ey - ys[-1]) < abs(ey - ys[0]):
        ys.reverse()
    reverse_x = abs(ex - xs[-1]) < abs(ex - xs[0])
    return [Waypoint.at_gsd(cam, x, y, gsd_child, INSPECT) for x, y in _serpentine(xs, ys, reverse_x)]
