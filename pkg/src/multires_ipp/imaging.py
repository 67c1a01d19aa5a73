"""Taking images at waypoints and assembling region-level segmentations."""
from __future__ import annotations

from dataclasses import dataclass

from .camera import CameraModel, Waypoint, footprint, inspection_grid
from .field import LabelGrid, Rect, crop_window
from .metrics import FusedMap, SegStats, miou, vegetation_ratio
from .oracle import OracleParams, image_uid, observe, upsample_to_base


@dataclass(frozen=True)
class Image:
    waypoint: Waypoint
    footprint: Rect
    uid: int
    seg: LabelGrid
    seg_at_base: LabelGrid

    @property
    def vegetation_ratio(self) -> float:
        return vegetation_ratio(self.seg)


def take_image(gt: LabelGrid, cam: CameraModel, wp: Waypoint, params: OracleParams) -> Image:
    fp = footprint(cam, wp)
    uid = image_uid(wp.x, wp.y, wp.gsd)
    seg = observe(gt, fp, wp.gsd, params, uid)
    return Image(wp, fp, uid, seg, upsample_to_base(seg, gt.resolution))


def image_stats(gt: LabelGrid, image: Image) -> SegStats:
    """Per-image scores of the upsampled segmentation against the ground-truth window.

    Scoring against unpooled ground truth charges every rung for what its
    pixel size cannot resolve, so scores are comparable across rungs.
    """
    return miou(image.seg_at_base.cells, crop_window(gt, image.footprint).cells)


def region_map(images: list[Image], region: Rect, resolution: float) -> FusedMap:
    """Fuse images into a local map covering ``region`` (all must lie inside it)."""
    shape = (int(round(region.height / resolution)), int(round(region.width / resolution)))
    local = FusedMap(shape, resolution, (region.x0, region.y0))
    for im in images:
        local.fuse(im.seg_at_base, im.waypoint.gsd, im.footprint)
    return local


def inspect_region(gt: LabelGrid, cam: CameraModel, parent: Waypoint, gsd: float,
                   params: OracleParams, entry: tuple[float, float]) -> tuple[list[Image], FusedMap]:
    children = inspection_grid(parent, cam, gsd, entry)
    images = [take_image(gt, cam, wp, params) for wp in children]
    return images, region_map(images, footprint(cam, parent), gt.resolution)
