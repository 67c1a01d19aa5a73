"""Decision function: offline initialization, runtime decisions, online adaptation.

Two observation sets drive the decision. ``set_O`` pairs the vegetation-ratio
change seen when re-imaging a region lower (``delta_v``) with the altitude
drop (``delta_h``); ``set_I`` pairs ``delta_v`` with the resulting mIoU change.
Both are fitted with GPs on a ground-truth training field; only ``set_O`` is
updated in flight.

Because ``delta_v`` is only known after descending, the GPs are queried at a
proxy ``proxy_alpha * v`` where ``v`` is the ratio seen at survey altitude.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import gp
from .camera import CameraModel, GsdLadder, altitude_at_gsd, footprint, survey_grid
from .field import LabelGrid, crop_window
from .imaging import inspect_region, take_image
from .metrics import miou, vegetation_ratio
from .oracle import OracleParams

CONTINUE = "continue"
DESCEND = "descend"

SCHEMA_VERSION = 1


class PlannerError(ValueError):
    pass


class DegenerateTrainingField(PlannerError):
    pass


@dataclass(frozen=True)
class Observation:
    region_id: int
    v_hmax: float
    gsd_child: float
    delta_v: float
    delta_h: float
    delta_miou: Optional[float] = None

    def __post_init__(self):
        if not self.delta_h > 0:
            raise PlannerError(f"delta_h must be > 0, got {self.delta_h}")


@dataclass(frozen=True)
class Decision:
    action: str
    target_gsd: Optional[float] = None
    predicted_gain: float = 0.0

    @property
    def descend(self) -> bool:
        return self.action == DESCEND


@dataclass(frozen=True)
class PlannerSettings:
    v_lo_percentile: float = 25.0
    v_hi_percentile: float = 90.0
    gain_threshold: float = 0.0
    refit_period: int = 5
    optimize: bool = True
    default_hyper: gp.Hyperparams = field(default_factory=gp.Hyperparams)
    search_space: gp.SearchSpace = field(default_factory=gp.SearchSpace)


@dataclass(frozen=True, eq=False)
class DecisionState:
    set_O: tuple[tuple[float, float], ...]
    set_I: tuple[tuple[float, float], ...]
    gp_O: gp.GpModel
    gp_I: gp.GpModel
    ladder: GsdLadder
    cam: CameraModel
    v_lo: float
    v_hi: float
    proxy_alpha: float
    gain_threshold: float = 0.0
    refit_period: int = 5
    updates_since_refit: int = 0
    search_space: gp.SearchSpace = field(default_factory=gp.SearchSpace)

    def __post_init__(self):
        if not 0.0 <= self.v_lo < self.v_hi <= 1.0:
            raise PlannerError(f"need 0 <= v_lo < v_hi <= 1, got {self.v_lo}, {self.v_hi}")
        if self.gp_O.n != len(self.set_O):
            raise PlannerError("gp_O is not fitted on set_O")
        if self.refit_period < 1:
            raise PlannerError("refit_period must be >= 1")

    @property
    def h_max(self) -> float:
        return altitude_at_gsd(self.cam, self.ladder.survey)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "set_O": [list(p) for p in self.set_O],
            "set_I": [list(p) for p in self.set_I],
            "hyper_O": self.gp_O.hyper.to_dict(),
            "hyper_I": self.gp_I.hyper.to_dict(),
            "ladder": list(self.ladder.rungs),
            "camera": {"sensor_width_mm": self.cam.sensor_width_mm,
                       "focal_length_mm": self.cam.focal_length_mm,
                       "image_width_px": self.cam.image_width_px,
                       "image_height_px": self.cam.image_height_px},
            "v_lo": self.v_lo,
            "v_hi": self.v_hi,
            "proxy_alpha": self.proxy_alpha,
            "tau": self.gain_threshold,
            "K": self.refit_period,
            "updates_since_refit": self.updates_since_refit,
            "search_space": {"length_scales": list(self.search_space.length_scales),
                             "signal_variances": list(self.search_space.signal_variances),
                             "noise_variances": list(self.search_space.noise_variances)},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionState":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise PlannerError(f"unsupported decision-state schema {d.get('schema_version')!r}")
        set_O = tuple((float(a), float(b)) for a, b in d["set_O"])
        set_I = tuple((float(a), float(b)) for a, b in d["set_I"])
        ss = d.get("search_space")
        space = gp.SearchSpace(tuple(ss["length_scales"]), tuple(ss["signal_variances"]),
                               tuple(ss["noise_variances"])) if ss else gp.SearchSpace()
        return cls(
            set_O=set_O, set_I=set_I,
            gp_O=_fit_pairs(set_O, gp.Hyperparams.from_dict(d["hyper_O"])),
            gp_I=_fit_pairs(set_I, gp.Hyperparams.from_dict(d["hyper_I"])),
            ladder=GsdLadder(tuple(d["ladder"])), cam=CameraModel(**d["camera"]),
            v_lo=float(d["v_lo"]), v_hi=float(d["v_hi"]), proxy_alpha=float(d["proxy_alpha"]),
            gain_threshold=float(d["tau"]), refit_period=int(d["K"]),
            updates_since_refit=int(d.get("updates_since_refit", 0)), search_space=space)

    @classmethod
    def loads(cls, text: str) -> "DecisionState":
        return cls.from_dict(json.loads(text))


def serialize_gp(model: gp.GpModel) -> bytes:
    return json.dumps(model.to_dict(), sort_keys=True).encode()


def _fit_pairs(pairs, hyper: gp.Hyperparams) -> gp.GpModel:
    arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
    return gp.fit(arr[:, 0], arr[:, 1], hyper)


def _fit_optimized(pairs, settings: PlannerSettings) -> gp.GpModel:
    arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
    hyper = settings.default_hyper
    if settings.optimize:
        hyper = gp.optimize_hyperparams(arr[:, 0], arr[:, 1], settings.search_space, settings.default_hyper)
    return gp.fit(arr[:, 0], arr[:, 1], hyper)


# ---------------------------------------------------------------------------
# Offline initialization
# ---------------------------------------------------------------------------

def collect_observations(gt: LabelGrid, cam: CameraModel, ladder: GsdLadder,
                         params: OracleParams) -> list[Observation]:
    """Image every survey region at the survey rung and at every finer rung."""
    survey = survey_grid(gt.extent, cam, ladder.survey)
    if len(ladder) < 2:
        raise PlannerError("ladder has no rung finer than the survey rung")
    h_max = altitude_at_gsd(cam, ladder.survey)
    records = []
    for region_id, wp in enumerate(survey):
        top = take_image(gt, cam, wp, params)
        region_gt = crop_window(gt, top.footprint)
        v_top = vegetation_ratio(top.seg)
        miou_top = miou(top.seg_at_base.cells, region_gt.cells).miou
        for g in ladder.finer:
            _, local = inspect_region(gt, cam, wp, g, params, entry=(wp.x, wp.y))
            v_child = vegetation_ratio(local.labels)
            miou_child = miou(local.labels, region_gt.cells).miou
            records.append(Observation(
                region_id=region_id, v_hmax=v_top, gsd_child=g,
                delta_v=v_top - v_child, delta_h=h_max - altitude_at_gsd(cam, g),
                delta_miou=miou_top - miou_child))
    return records


def initialize(gt: LabelGrid, cam: CameraModel, ladder: GsdLadder, params: OracleParams,
               settings: PlannerSettings | None = None) -> DecisionState:
    settings = settings or PlannerSettings()
    survey = survey_grid(gt.extent, cam, ladder.survey)
    if len(survey) < 4:
        raise PlannerError(f"training field holds {len(survey)} survey footprints, need >= 4")
    # judged on the ground truth: oracle noise alone makes bare soil look vegetated
    if vegetation_ratio(gt) == 0.0:
        raise DegenerateTrainingField("degenerate training field: the ground truth holds no vegetation")
    records = collect_observations(gt, cam, ladder, params)
    v_top = np.array([r.v_hmax for r in records])
    if not (v_top > 0).any():
        raise DegenerateTrainingField("degenerate training field: no vegetation observed at survey altitude")
    vegetated = [r for r in records if r.v_hmax > 0]
    proxy_alpha = float(np.mean([r.delta_v for r in vegetated]) / np.mean([r.v_hmax for r in vegetated]))

    set_O = tuple((r.delta_v, r.delta_h) for r in records)
    set_I = tuple((r.delta_v, r.delta_miou) for r in records)
    v_lo = float(np.percentile(v_top, settings.v_lo_percentile))
    v_hi = float(np.percentile(v_top, settings.v_hi_percentile))
    if not v_hi > v_lo:
        v_hi = min(1.0, max(v_lo + 1e-6, v_hi))
    return DecisionState(
        set_O=set_O, set_I=set_I,
        gp_O=_fit_optimized(set_O, settings), gp_I=_fit_optimized(set_I, settings),
        ladder=ladder, cam=cam, v_lo=v_lo, v_hi=v_hi, proxy_alpha=proxy_alpha,
        gain_threshold=settings.gain_threshold, refit_period=settings.refit_period,
        search_space=settings.search_space)


# ---------------------------------------------------------------------------
# Runtime
# ---------------------------------------------------------------------------

def snap_to_rung(ladder: GsdLadder, cam: CameraModel, h_target: float) -> float:
    """Rung whose altitude is nearest ``h_target``; ties go to the coarser rung."""
    best, best_d = None, math.inf
    for g in ladder.rungs:  # coarse to fine, so strict < keeps the coarser on ties
        d = abs(altitude_at_gsd(cam, g) - h_target)
        if d < best_d - 1e-12:
            best, best_d = g, d
    return best


def proxy_input(state: DecisionState, v: float) -> float:
    dv = np.asarray([p[0] for p in state.set_O])
    return float(np.clip(state.proxy_alpha * v, dv.min(), dv.max()))


def decide(state: DecisionState, v: float) -> Decision:
    if not 0.0 <= v <= 1.0:
        raise PlannerError(f"vegetation ratio must lie in [0, 1], got {v}")
    if len(state.ladder) < 2 or v < state.v_lo:
        return Decision(CONTINUE)
    x = proxy_input(state, v)
    gain = -float(state.gp_I.predict([x])[0][0])
    if gain <= state.gain_threshold:
        return Decision(CONTINUE, predicted_gain=gain)
    if v >= state.v_hi:
        return Decision(DESCEND, state.ladder.finest, gain)
    h_max = state.h_max
    drop = float(state.gp_O.predict([x])[0][0])
    h_floor = altitude_at_gsd(state.cam, state.ladder.finest)
    h_target = min(max(h_max - drop, h_floor), h_max)
    target = snap_to_rung(state.ladder, state.cam, h_target)
    if target == state.ladder.survey:
        return Decision(CONTINUE, predicted_gain=gain)
    return Decision(DESCEND, target, gain)


def record_and_adapt(state: DecisionState, obs: Observation) -> DecisionState:
    """Append ``(delta_v, delta_h)`` to set_O and refit gp_O.

    Hyperparameters are re-optimized on every ``refit_period``-th update;
    other updates recompute the posterior with the current hyperparameters.
    """
    set_O = state.set_O + ((float(obs.delta_v), float(obs.delta_h)),)
    count = state.updates_since_refit + 1
    arr = np.asarray(set_O)
    if count >= state.refit_period:
        hyper = gp.optimize_hyperparams(arr[:, 0], arr[:, 1], state.search_space, state.gp_O.hyper)
        count = 0
    else:
        hyper = state.gp_O.hyper
    return replace(state, set_O=set_O, gp_O=gp.fit(arr[:, 0], arr[:, 1], hyper), updates_since_refit=count)


def decide_linear(v: float, v_lo: float, v_hi: float, ladder: GsdLadder) -> Decision:
    """Baseline: GSD linear in ``v`` between the coarsest and finest rung."""
    if not 0.0 <= v <= 1.0:
        raise PlannerError(f"vegetation ratio must lie in [0, 1], got {v}")
    if len(ladder) < 2 or v <= v_lo:
        return Decision(CONTINUE)
    if v >= v_hi:
        return Decision(DESCEND, ladder.finest)
    t = (v - v_lo) / (v_hi - v_lo)
    g_target = ladder.survey + t * (ladder.finest - ladder.survey)
    best, best_d = None, math.inf
    for g in ladder.rungs:
        d = abs(g - g_target)
        if d < best_d - 1e-12:
            best, best_d = g, d
    if best == ladder.survey:
        return Decision(CONTINUE)
    return Decision(DESCEND, best)
