"""Vegetation ratio, IoU/mIoU and the highest-resolution-wins fused map."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .field import N_CLASSES, ClassId, FieldError, LabelGrid, Rect, cell_slices

# Label used in fused maps for cells no observation has covered yet.
UNOBSERVED = 255


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class SegStats:
    vegetation_ratio: float
    iou: tuple[float, float, float]
    miou: float
    pixel_count: int

    def as_row(self) -> dict:
        return {"vegetation_ratio": self.vegetation_ratio, "iou_soil": self.iou[0],
                "iou_crop": self.iou[1], "iou_weed": self.iou[2], "miou": self.miou,
                "pixel_count": self.pixel_count}


def _cells(x) -> np.ndarray:
    if isinstance(x, LabelGrid):
        return x.cells
    arr = np.asarray(x)
    if arr.dtype.kind not in "iu":
        if arr.size and not np.array_equal(arr, np.round(arr)):
            raise MetricsError("label arrays must hold integer class codes")
        arr = arr.astype(np.int64)
    return arr


def vegetation_ratio(seg) -> float:
    """Fraction of crop and weed cells."""
    cells = _cells(seg)
    if cells.size == 0:
        raise MetricsError("vegetation ratio of an empty grid")
    counts = np.bincount(cells.ravel(), minlength=N_CLASSES)
    return float(counts[ClassId.CROP] + counts[ClassId.WEED]) / cells.size


def class_iou(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Per-class IoU; NaN where a class is absent from both maps.

    ``pred`` may hold ``UNOBSERVED``: such cells match no class, so they only
    enlarge the union of the ground-truth class.
    """
    pred = np.minimum(pred.ravel(), N_CLASSES).astype(np.uint8)
    code = gt.ravel().astype(np.uint8) * np.uint8(N_CLASSES + 1) + pred
    conf = np.bincount(code,
                       minlength=N_CLASSES * (N_CLASSES + 1)).reshape(N_CLASSES, N_CLASSES + 1)
    inter = np.diag(conf[:, :N_CLASSES]).astype(float)
    gt_count = conf.sum(axis=1)
    pred_count = conf[:, :N_CLASSES].sum(axis=0)
    union = (gt_count + pred_count - inter).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, inter / union, np.nan)


def miou(pred, gt) -> SegStats:
    p, g = _cells(pred), _cells(gt)
    if p.shape != g.shape:
        raise MetricsError(f"shape mismatch: {p.shape} vs {g.shape}")
    if isinstance(pred, LabelGrid) and isinstance(gt, LabelGrid) and not math.isclose(
            pred.resolution, gt.resolution, rel_tol=1e-9):
        raise MetricsError("resolution mismatch")
    if g.size == 0:
        raise MetricsError("mIoU of empty grids")
    iou = class_iou(p, g)
    present = ~np.isnan(iou)
    m = float(iou[present].mean()) if present.any() else 0.0
    observed = p[p < N_CLASSES]
    v = vegetation_ratio(observed) if observed.size else 0.0
    return SegStats(v, tuple(float(x) if not np.isnan(x) else 0.0 for x in iou), m, int(g.size))


class FusedMap:
    """Field segmentation at base resolution plus per-cell source GSD.

    A cell is overwritten only by a strictly finer observation, so equal-GSD
    re-observations keep the first write.
    """

    def __init__(self, shape: tuple[int, int], resolution: float, origin=(0.0, 0.0)):
        self.labels = np.full(shape, UNOBSERVED, dtype=np.uint8)
        self.provenance = np.full(shape, np.inf, dtype=np.float64)
        self.resolution = float(resolution)
        self.origin = (float(origin[0]), float(origin[1]))

    @classmethod
    def like(cls, grid: LabelGrid) -> "FusedMap":
        return cls(grid.cells.shape, grid.resolution, grid.origin)

    @property
    def shape(self):
        return self.labels.shape

    def slices(self, fp: Rect) -> tuple[slice, slice]:
        try:
            return cell_slices(self.shape, self.resolution, self.origin, fp)
        except FieldError as exc:
            raise MetricsError(str(exc)) from None

    def fuse(self, seg_at_base: LabelGrid, gsd_source: float, fp: Rect) -> "FusedMap":
        if not math.isclose(seg_at_base.resolution, self.resolution, rel_tol=1e-9):
            raise MetricsError("segmentation is not at the map's base resolution")
        rows, cols = self.slices(fp)
        if (rows.stop - rows.start, cols.stop - cols.start) != seg_at_base.cells.shape:
            raise MetricsError(
                f"footprint covers {(rows.stop - rows.start, cols.stop - cols.start)} cells "
                f"but segmentation has shape {seg_at_base.cells.shape}")
        prov = self.provenance[rows, cols]
        write = gsd_source < prov
        self.labels[rows, cols][write] = seg_at_base.cells[write]
        prov[write] = gsd_source
        return self

    def window(self, fp: Rect) -> np.ndarray:
        rows, cols = self.slices(fp)
        return self.labels[rows, cols]

    @property
    def fully_observed(self) -> bool:
        return bool(np.isfinite(self.provenance).all())

    def stats(self, gt: LabelGrid) -> SegStats:
        return miou(self.labels, gt.cells)


def fuse(fmap: FusedMap, seg_at_base: LabelGrid, gsd_source: float, fp: Rect) -> FusedMap:
    return fmap.fuse(seg_at_base, gsd_source, fp)
