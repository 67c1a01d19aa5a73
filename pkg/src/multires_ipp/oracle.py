"""Altitude-dependent segmentation oracle.

An observation is the ground truth seen through a sensor of pixel size
``gsd``: base cells are majority-pooled into sensor pixels, then every
sensor pixel is independently mislabeled with a probability that grows
linearly with the GSD. Noise is drawn from a counter-based stream keyed by
``(seed, image_uid)`` and indexed by pixel, so the output does not depend on
call order.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .field import N_CLASSES, LabelGrid, Rect, crop_window


class OracleError(ValueError):
    pass


def _default_confusion():
    return ((0.0, 0.7, 0.3), (0.3, 0.0, 0.7), (0.2, 0.8, 0.0))


@dataclass(frozen=True)
class OracleParams:
    """Noise model. ``error_slope`` is probability per m/px above ``gsd_min``."""

    base_error: tuple[float, float, float] = (0.01, 0.03, 0.05)
    error_slope: tuple[float, float, float] = (0.2, 1.0, 2.0)
    error_cap: float = 0.35
    confusion: tuple[tuple[float, ...], ...] = field(default_factory=_default_confusion)
    seed: int = 0
    gsd_min: float = 0.010
    gsd_max: float = 0.030

    def __post_init__(self):
        base = tuple(float(v) for v in self.base_error)
        slope = tuple(float(v) for v in self.error_slope)
        conf = tuple(tuple(float(v) for v in row) for row in self.confusion)
        if len(base) != N_CLASSES or len(slope) != N_CLASSES or len(conf) != N_CLASSES:
            raise OracleError("oracle parameters must cover exactly three classes")
        if any(not 0.0 <= e < 1.0 for e in base):
            raise OracleError("base_error entries must lie in [0, 1)")
        if any(k < 0 for k in slope):
            raise OracleError("error_slope entries must be >= 0")
        if not 0.0 < self.error_cap <= 1.0:
            raise OracleError("error_cap must lie in (0, 1]")
        for c, row in enumerate(conf):
            if len(row) != N_CLASSES or row[c] != 0.0 or any(p < 0 for p in row):
                raise OracleError(f"confusion row {c} must be non-negative with a zero diagonal")
            if not math.isclose(sum(row), 1.0, abs_tol=1e-9):
                raise OracleError(f"confusion row {c} must sum to 1")
        span = self.gsd_max - self.gsd_min
        for c in range(N_CLASSES):
            if base[c] + slope[c] * span > self.error_cap + 1e-12:
                raise OracleError(f"class {c}: error at gsd_max exceeds error_cap")
        object.__setattr__(self, "base_error", base)
        object.__setattr__(self, "error_slope", slope)
        object.__setattr__(self, "confusion", conf)

    @classmethod
    def noiseless(cls, seed: int = 0) -> "OracleParams":
        return cls(base_error=(0.0, 0.0, 0.0), error_slope=(0.0, 0.0, 0.0), seed=seed)

    def error_rate(self, gsd: float) -> np.ndarray:
        base = np.asarray(self.base_error)
        slope = np.asarray(self.error_slope)
        return np.minimum(base + slope * (gsd - self.gsd_min), self.error_cap).clip(min=0.0)

    def to_dict(self) -> dict:
        return {"base_error": list(self.base_error), "error_slope": list(self.error_slope),
                "error_cap": self.error_cap, "confusion": [list(r) for r in self.confusion],
                "seed": self.seed, "gsd_min": self.gsd_min, "gsd_max": self.gsd_max}

    @classmethod
    def from_dict(cls, d: dict) -> "OracleParams":
        return cls(base_error=tuple(d["base_error"]), error_slope=tuple(d["error_slope"]),
                   error_cap=d["error_cap"], confusion=tuple(tuple(r) for r in d["confusion"]),
                   seed=int(d["seed"]), gsd_min=d.get("gsd_min", 0.010), gsd_max=d.get("gsd_max", 0.030))


def image_uid(x: float, y: float, gsd: float) -> int:
    """Stable 63-bit id for an image taken at ground position (x, y) and ``gsd``.

    Quantized to millimeters so identical waypoints from different strategies
    share one id and therefore one noise draw.
    """
    key = f"{round(x * 1000)}:{round(y * 1000)}:{round(gsd * 1e6)}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little") >> 1


def _axis_bins(n_cells: int, res: float, gsd: float) -> tuple[np.ndarray, int]:
    """Map base cells along one axis to the sensor pixel containing their center."""
    n_pix = max(1, int(round(n_cells * res / gsd)))
    idx = np.floor((np.arange(n_cells) + 0.5) * res / gsd + 1e-9).astype(np.int64)
    return np.minimum(idx, n_pix - 1), n_pix


def pool(window: LabelGrid, gsd: float) -> LabelGrid:
    """Majority-pool a base-resolution window into sensor pixels of size ``gsd``.

    Ties go to the lowest class code.
    """
    if gsd < window.resolution * (1 - 1e-9):
        raise OracleError(f"gsd {gsd} is finer than base resolution {window.resolution}")
    rows, n_r = _axis_bins(window.height, window.resolution, gsd)
    cols, n_c = _axis_bins(window.width, window.resolution, gsd)
    pix = rows[:, None] * n_c + cols[None, :]
    counts = np.bincount((pix * N_CLASSES + window.cells).ravel(), minlength=n_r * n_c * N_CLASSES)
    labels = counts.reshape(n_r, n_c, N_CLASSES).argmax(axis=2).astype(np.uint8)
    return LabelGrid(labels, gsd, window.origin)


def corrupt(seg: LabelGrid, params: OracleParams, uid: int) -> LabelGrid:
    """Flip sensor pixels per the class-dependent error rate and confusion rows."""
    rates = params.error_rate(seg.resolution)
    if not rates.any():
        return seg
    rng = np.random.Generator(np.random.Philox(key=[params.seed % 2**64, uid]))
    flat = seg.cells.ravel()
    draws = rng.random((flat.size, 2))
    flip = draws[:, 0] < rates[flat]
    cum = np.cumsum(np.asarray(params.confusion), axis=1)
    out = flat.copy()
    src = flat[flip]
    # first class whose cumulative probability exceeds the draw
    new = (draws[flip, 1][:, None] >= cum[src]).sum(axis=1)
    out[flip] = np.minimum(new, N_CLASSES - 1)
    return LabelGrid(out.reshape(seg.cells.shape), seg.resolution, seg.origin)


def observe(gt: LabelGrid, fp: Rect, gsd: float, params: OracleParams, image_uid: int) -> LabelGrid:
    """Simulated segmentation of footprint ``fp`` at sensor resolution ``gsd``."""
    if gsd < gt.resolution * (1 - 1e-9):
        raise OracleError(f"gsd {gsd} is finer than ground-truth resolution {gt.resolution}")
    if not gt.extent.contains(fp, tol=gt.resolution * 1e-3):
        raise OracleError(f"footprint {fp} leaves the field extent {gt.extent}")
    return corrupt(pool(crop_window(gt, fp), gsd), params, image_uid)


def upsample_to_base(seg: LabelGrid, base_resolution: float) -> LabelGrid:
    """Nearest-neighbour replication onto the base grid."""
    if seg.resolution < base_resolution * (1 - 1e-9):
        raise OracleError("segmentation is finer than the base resolution")
    n_r = int(round(seg.height * seg.resolution / base_resolution))
    n_c = int(round(seg.width * seg.resolution / base_resolution))
    rows, _ = _axis_bins(n_r, base_resolution, seg.resolution)
    cols, _ = _axis_bins(n_c, base_resolution, seg.resolution)
    rows = np.minimum(rows, seg.height - 1)
    cols = np.minimum(cols, seg.width - 1)
    return LabelGrid(seg.cells[np.ix_(rows, cols)], base_resolution, seg.origin)
