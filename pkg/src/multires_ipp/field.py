"""Labeled terrain grids, synthetic field generation and NetPBM raster I/O.

World frame: x east, y north, origin at the south-west field corner. Grid
row 0 is the northernmost row, so cell ``(r, c)`` has its center at
``x = ox + (c + 0.5) * res`` and ``y = oy + (height - r - 0.5) * res``.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Tolerance (in cells) when mapping rectangle edges to cell centers.
_EDGE_EPS = 1e-6


class ClassId(enum.IntEnum):
    SOIL = 0
    CROP = 1
    WEED = 2


N_CLASSES = len(ClassId)


class FieldError(ValueError):
    """Invalid field specification or grid operation."""


class RasterParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Rect:
    """Axis-aligned world-frame rectangle ``[x0, x1) x [y0, y1)`` in meters."""

    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return max(self.width, 0.0) * max(self.height, 0.0)

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))

    def intersection(self, other: "Rect") -> "Rect | None":
        x0, y0 = max(self.x0, other.x0), max(self.y0, other.y0)
        x1, y1 = min(self.x1, other.x1), min(self.y1, other.y1)
        if x1 <= x0 or y1 <= y0:
            return None
        return Rect(x0, y0, x1, y1)

    def contains(self, other: "Rect", tol: float = 1e-9) -> bool:
        return (other.x0 >= self.x0 - tol and other.y0 >= self.y0 - tol
                and other.x1 <= self.x1 + tol and other.y1 <= self.y1 + tol)


@dataclass(frozen=True, eq=False)
class LabelGrid:
    """Immutable class raster. ``cells`` has shape ``(height, width)``, dtype uint8."""

    cells: np.ndarray
    resolution: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        cells = np.ascontiguousarray(self.cells, dtype=np.uint8)
        if cells.ndim != 2:
            raise FieldError("cells must be a 2-D array")
        if not self.resolution > 0:
            raise FieldError(f"resolution must be > 0, got {self.resolution}")
        if cells.size and cells.max() >= N_CLASSES:
            raise FieldError("cells contain an invalid class id")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "resolution", float(self.resolution))

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def extent(self) -> Rect:
        ox, oy = self.origin
        return Rect(ox, oy, ox + self.width * self.resolution, oy + self.height * self.resolution)

    def __eq__(self, other):
        if not isinstance(other, LabelGrid):
            return NotImplemented
        return (self.resolution == other.resolution and self.origin == other.origin
                and self.cells.shape == other.cells.shape
                and bool(np.array_equal(self.cells, other.cells)))

    __hash__ = None

    def cell_slices(self, rect: Rect) -> tuple[slice, slice]:
        """Row/column slices of the cells whose centers fall inside ``rect``."""
        return cell_slices(self.cells.shape, self.resolution, self.origin, rect)


def cell_slices(shape: tuple[int, int], res: float, origin: tuple[float, float],
                rect: Rect) -> tuple[slice, slice]:
    height, width = shape
    ox, oy = origin
    c0 = max(math.ceil((rect.x0 - ox) / res - 0.5 - _EDGE_EPS), 0)
    c1 = min(math.ceil((rect.x1 - ox) / res - 0.5 - _EDGE_EPS), width)
    # rows count from the north edge
    top = oy + height * res
    r0 = max(math.ceil((top - rect.y1) / res - 0.5 - _EDGE_EPS), 0)
    r1 = min(math.ceil((top - rect.y0) / res - 0.5 - _EDGE_EPS), height)
    if c1 <= c0 or r1 <= r0:
        raise FieldError(f"rectangle {rect} does not intersect the grid")
    return slice(r0, r1), slice(c0, c1)


def crop_window(grid: LabelGrid, rect: Rect) -> LabelGrid:
    """Sub-grid of the cells whose centers fall inside ``rect``."""
    rows, cols = grid.cell_slices(rect)
    ox, oy = grid.origin
    res = grid.resolution
    origin = (ox + cols.start * res, oy + (grid.height - rows.stop) * res)
    return LabelGrid(grid.cells[rows, cols], res, origin)


# ---------------------------------------------------------------------------
# Synthetic fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldSpec:
    """Parameters of a synthetic crop/weed field.

    Crop plants sit on east-west rows at ``y = k * row_spacing_m`` (k >= 1),
    ``crop_spacing_m`` apart along the row, with uniform positional jitter.
    Weeds are small discs of ``weed_plant_radius_m`` scattered inside
    ``weed_cluster_count`` disc-shaped clusters; ``weed_density`` is the
    planted weed area per unit cluster area.
    """

    extent: tuple[float, float] = (24.0, 24.0)
    base_resolution: float = 0.005
    row_spacing_m: float = 0.5
    crop_radius_m: float = 0.08
    crop_jitter_m: float = 0.02
    weed_cluster_count: int = 8
    weed_cluster_radius_m: float = 2.0
    weed_density: float = 0.7
    seed: int = 0
    crop_spacing_m: float = 0.3
    weed_plant_radius_m: float = 0.01

    def __post_init__(self):
        lengths = {
            "extent width": self.extent[0], "extent height": self.extent[1],
            "base_resolution": self.base_resolution, "row_spacing_m": self.row_spacing_m,
            "crop_radius_m": self.crop_radius_m, "weed_cluster_radius_m": self.weed_cluster_radius_m,
            "crop_spacing_m": self.crop_spacing_m, "weed_plant_radius_m": self.weed_plant_radius_m,
        }
        for name, value in lengths.items():
            if not value > 0:
                raise FieldError(f"{name} must be > 0, got {value}")
        if self.crop_jitter_m < 0:
            raise FieldError("crop_jitter_m must be >= 0")
        if self.weed_cluster_count < 0:
            raise FieldError("weed_cluster_count must be >= 0")
        if not 0.0 <= self.weed_density <= 1.0:
            raise FieldError(f"weed_density must lie in [0, 1], got {self.weed_density}")

    @property
    def shape(self) -> tuple[int, int]:
        """(height, width) in base cells."""
        return (_n_cells(self.extent[1], self.base_resolution),
                _n_cells(self.extent[0], self.base_resolution))


def _n_cells(length: float, res: float) -> int:
    return int(math.floor(length / res + 1e-9))


def _stream(seed: int, stream_id: int) -> np.random.Generator:
    # Philox is counter-based: each (seed, stream) key is an independent stream.
    return np.random.Generator(np.random.Philox(key=[seed % 2**64, stream_id]))


_CROP_STREAM, _CLUSTER_STREAM, _WEED_STREAM = 1, 2, 3


def plant_discs(spec: FieldSpec) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(crop_discs, weed_discs)`` as ``(n, 3)`` arrays of (x, y, radius)."""
    width_m, height_m = spec.extent

    n_rows = int(math.ceil(height_m / spec.row_spacing_m)) - 1
    row_y = spec.row_spacing_m * np.arange(1, n_rows + 1)
    row_y = row_y[row_y < height_m]
    n_along = int(math.floor(width_m / spec.crop_spacing_m))
    along_x = spec.crop_spacing_m * (np.arange(n_along) + 0.5)
    cx, cy = np.meshgrid(along_x, row_y)
    cx, cy = cx.ravel(), cy.ravel()
    if cx.size:
        jitter = _stream(spec.seed, _CROP_STREAM).uniform(-1.0, 1.0, size=(cx.size, 2))
        cx = cx + spec.crop_jitter_m * jitter[:, 0]
        cy = cy + spec.crop_jitter_m * jitter[:, 1]
    crops = np.column_stack([cx, cy, np.full(cx.size, spec.crop_radius_m)])

    weeds = np.empty((0, 3))
    if spec.weed_cluster_count and spec.weed_density > 0:
        centers = _stream(spec.seed, _CLUSTER_STREAM).uniform(
            0.0, 1.0, size=(spec.weed_cluster_count, 2)) * np.array([width_m, height_m])
        per_cluster = int(round(spec.weed_density * (spec.weed_cluster_radius_m / spec.weed_plant_radius_m) ** 2))
        rng = _stream(spec.seed, _WEED_STREAM)
        u = rng.uniform(0.0, 1.0, size=(spec.weed_cluster_count, per_cluster, 2))
        rad = spec.weed_cluster_radius_m * np.sqrt(u[..., 0])
        ang = 2.0 * np.pi * u[..., 1]
        wx = centers[:, None, 0] + rad * np.cos(ang)
        wy = centers[:, None, 1] + rad * np.sin(ang)
        weeds = np.column_stack([wx.ravel(), wy.ravel(), np.full(wx.size, spec.weed_plant_radius_m)])
    return crops, weeds


def _rasterize_discs(mask: np.ndarray, discs: np.ndarray, res: float) -> None:
    """Set every cell of ``mask`` whose center lies inside a disc."""
    if discs.size == 0:
        return
    height, width = mask.shape
    x, y, r = discs[:, 0], discs[:, 1], discs[:, 2]
    col = np.floor(x / res).astype(np.int64)
    row = np.floor(height - y / res).astype(np.int64)
    reach = int(math.ceil(r.max() / res)) + 1
    for dr in range(-reach, reach + 1):
        for dc in range(-reach, reach + 1):
            rr, cc = row + dr, col + dc
            xc = (cc + 0.5) * res
            yc = (height - rr - 0.5) * res
            hit = ((xc - x) ** 2 + (yc - y) ** 2 <= r * r) & (rr >= 0) & (rr < height) & (cc >= 0) & (cc < width)
            mask[rr[hit], cc[hit]] = True


def generate_field(spec: FieldSpec) -> LabelGrid:
    """Rasterize a synthetic field. Pure function of ``spec``."""
    height, width = spec.shape
    if height < 1 or width < 1:
        raise FieldError(f"extent {spec.extent} is smaller than one {spec.base_resolution} m pixel")
    crops, weeds = plant_discs(spec)
    cells = np.zeros((height, width), dtype=np.uint8)
    mask = np.zeros((height, width), dtype=bool)
    _rasterize_discs(mask, crops, spec.base_resolution)
    cells[mask] = ClassId.CROP
    mask[:] = False
    _rasterize_discs(mask, weeds, spec.base_resolution)
    cells[mask] = ClassId.WEED
    return LabelGrid(cells, spec.base_resolution, (0.0, 0.0))


# ---------------------------------------------------------------------------
# NetPBM raster I/O
# ---------------------------------------------------------------------------

_META_RE = re.compile(
    r"#\s*resolution_m_per_px=(\S+)\s+origin_x=(\S+)\s+origin_y=(\S+)\s*$")


def encode_raster(grid: LabelGrid, binary: bool = True) -> bytes:
    magic = "P5" if binary else "P2"
    header = (f"{magic}\n"
              f"# resolution_m_per_px={grid.resolution!r} origin_x={grid.origin[0]!r} origin_y={grid.origin[1]!r}\n"
              f"{grid.width} {grid.height}\n2\n").encode("ascii")
    if binary:
        return header + grid.cells.tobytes()
    lines = [" ".join(str(v) for v in row) for row in grid.cells]
    return header + ("\n".join(lines) + "\n").encode("ascii")


def write_raster(grid: LabelGrid, path, binary: bool = True) -> None:
    Path(path).write_bytes(encode_raster(grid, binary))


def read_raster(path) -> LabelGrid:
    return decode_raster(Path(path).read_bytes())


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def skip_space(self):
        while self.pos < len(self.data) and self.data[self.pos] in b" \t\r\n":
            self.pos += 1

    def line(self) -> bytes:
        end = self.data.find(b"\n", self.pos)
        if end < 0:
            end = len(self.data)
        out = self.data[self.pos:end]
        self.pos = min(end + 1, len(self.data))
        return out

    def token(self) -> tuple[bytes, int]:
        while True:
            self.skip_space()
            if self.pos < len(self.data) and self.data[self.pos:self.pos + 1] == b"#":
                self.line()
                continue
            break
        start = self.pos
        while self.pos < len(self.data) and self.data[self.pos] not in b" \t\r\n#":
            self.pos += 1
        if start == self.pos:
            raise RasterParseError("unexpected end of header", start)
        return self.data[start:self.pos], start


def _int_token(cur: _Cursor, what: str) -> int:
    tok, off = cur.token()
    if not tok.isdigit():
        raise RasterParseError(f"malformed {what} {tok!r}", off)
    return int(tok)


def decode_raster(data: bytes) -> LabelGrid:
    cur = _Cursor(data)
    magic = cur.line().strip()
    if magic not in (b"P2", b"P5"):
        raise RasterParseError(f"bad magic number {magic!r}", 0)
    meta_off = cur.pos
    m = _META_RE.match(cur.line().decode("ascii", errors="replace"))
    if m is None:
        raise RasterParseError("missing resolution/origin comment after magic number", meta_off)
    try:
        resolution, ox, oy = (float(g) for g in m.groups())
    except ValueError:
        raise RasterParseError("malformed resolution/origin comment", meta_off) from None
    width = _int_token(cur, "width")
    height = _int_token(cur, "height")
    maxval_off = cur.pos
    maxval = _int_token(cur, "maxval")
    if maxval != 2:
        raise RasterParseError(f"maxval must be 2, got {maxval}", maxval_off)
    n = width * height
    if magic == b"P5":
        # exactly one whitespace byte separates the header from the pixel data
        start = cur.pos + 1
        body = data[start:]
        if len(body) != n:
            raise RasterParseError(f"size mismatch: expected {n} pixel bytes, found {len(body)}", start)
        cells = np.frombuffer(body, dtype=np.uint8).copy()
        bad = np.flatnonzero(cells > maxval)
        if bad.size:
            raise RasterParseError(f"pixel value {cells[bad[0]]} exceeds maxval", start + int(bad[0]))
    else:
        start = cur.pos
        values = []
        for match in re.finditer(rb"\S+", data[start:]):
            tok = match.group()
            off = start + match.start()
            if not tok.isdigit():
                raise RasterParseError(f"malformed pixel value {tok!r}", off)
            v = int(tok)
            if v > maxval:
                raise RasterParseError(f"pixel value {v} exceeds maxval", off)
            if len(values) == n:
                raise RasterParseError("size mismatch: more pixel values than width*height", off)
            values.append(v)
        if len(values) != n:
            raise RasterParseError(f"size mismatch: expected {n} pixel values, found {len(values)}", len(data))
        cells = np.array(values, dtype=np.uint8)
    try:
        return LabelGrid(cells.reshape(height, width), resolution, (ox, oy))
    except FieldError as exc:
        raise RasterParseError(str(exc), meta_off) from None
