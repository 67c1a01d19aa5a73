"""Mission execution, time accounting and strategy comparison."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .camera import CameraModel, GsdLadder, Waypoint, altitude_at_gsd, footprint, survey_grid
from .field import LabelGrid
from .imaging import Image, image_stats, inspect_region, take_image
from .metrics import FusedMap, SegStats, vegetation_ratio
from .oracle import OracleParams
from .planner import DecisionState, Observation, decide, decide_linear, record_and_adapt

FIXED = "fixed"
NON_ADAPTIVE = "non_adaptive"
ADAPTIVE = "adaptive"
LINEAR = "linear"
KINDS = (FIXED, NON_ADAPTIVE, ADAPTIVE, LINEAR)


class SimError(ValueError):
    pass


@dataclass(frozen=True)
class TimeModel:
    v_max: float = 5.0
    a_max: float = 2.0
    image_overhead_s: float = 5.0

    def __post_init__(self):
        if not (self.v_max > 0 and self.a_max > 0 and self.image_overhead_s > 0):
            raise SimError("time model parameters must be > 0")


def leg_time(d: float, tm: TimeModel) -> float:
    """Rest-to-rest travel time over distance ``d`` with capped speed and acceleration."""
    if d < 0:
        raise SimError(f"negative leg length {d}")
    if d >= tm.v_max ** 2 / tm.a_max:
        return d / tm.v_max + tm.v_max / tm.a_max
    return 2.0 * math.sqrt(d / tm.a_max)


@dataclass(frozen=True)
class Strategy:
    kind: str
    gsd: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SimError(f"unknown strategy kind {self.kind!r}")
        if (self.kind == FIXED) != (self.gsd is not None):
            raise SimError("a gsd is given for fixed strategies and only for them")

    @property
    def name(self) -> str:
        if self.kind == FIXED:
            return f"fixed_{self.gsd * 100:.1f}"
        return self.kind

    @classmethod
    def parse(cls, text: str) -> "Strategy":
        """``adaptive``, ``non_adaptive``, ``linear``, or ``fixed_<cm/px>`` / ``fixed:<cm/px>``."""
        text = text.strip()
        for sep in ("_", ":", "(", "="):
            prefix = FIXED + sep
            if text.startswith(prefix):
                return cls(FIXED, float(text[len(prefix):].rstrip(")")) / 100.0)
        return cls(text)


def _dist(a: Sequence[float], b: Sequence[float]) -> float:
    return math.dist(a, b)


@dataclass
class MissionTrace:
    events: list = field(default_factory=list)
    total_time_s: float = 0.0
    fused: Optional[FusedMap] = None
    field_stats: Optional[SegStats] = None
    strategy: str = ""
    seed: int = 0
    final_state: Optional[DecisionState] = None

    @property
    def images(self) -> list[dict]:
        return [e for e in self.events if e["type"] == "image"]

    @property
    def n_images(self) -> int:
        return len(self.images)

    @property
    def n_descents(self) -> int:
        return sum(1 for e in self.events if e["type"] == "decision" and e["action"] == "descend")

    def to_jsonl(self) -> str:
        header = {"type": "mission", "strategy": self.strategy, "seed": self.seed}
        footer = {"type": "summary", "total_time_s": self.total_time_s, "n_images": self.n_images,
                  "n_descents": self.n_descents,
                  "field_miou": None if self.field_stats is None else self.field_stats.miou}
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in [header, *self.events, footer])


def replay_time(events: Iterable[dict], tm: TimeModel) -> float:
    """Recompute mission time from fly legs and image count."""
    total = 0.0
    for e in events:
        if e["type"] == "fly":
            total += leg_time(_dist(e["from"], e["to"]), tm)
        elif e["type"] == "image":
            total += tm.image_overhead_s
    return total


class _Mission:
    def __init__(self, gt, cam, params, tm, trace):
        self.gt, self.cam, self.params, self.tm, self.trace = gt, cam, params, tm, trace
        self.pos: Optional[tuple[float, float, float]] = None

    def fly_to(self, wp: Waypoint):
        target = wp.position
        start = target if self.pos is None else self.pos
        seconds = 0.0 if self.pos is None else leg_time(_dist(start, target), self.tm)
        self.trace.events.append({"type": "fly", "from": list(start), "to": list(target), "seconds": seconds})
        self.trace.total_time_s += seconds
        self.pos = target

    def log_image(self, im: Image, region_id: int):
        stats = image_stats(self.gt, im) if self.gt is not None else None
        self.trace.events.append({
            "type": "image", "region": region_id, "waypoint": list(im.waypoint.position),
            "level": im.waypoint.level, "gsd": im.waypoint.gsd, "uid": im.uid,
            "v": vegetation_ratio(im.seg), "miou": None if stats is None else stats.miou})
        self.trace.total_time_s += self.tm.image_overhead_s
        self.trace.fused.fuse(im.seg_at_base, im.waypoint.gsd, im.footprint)


def run_mission(gt: LabelGrid, cam: CameraModel, ladder: GsdLadder, params: OracleParams,
                tm: TimeModel, strategy: Strategy, state: DecisionState | None = None,
                seed: Optional[int] = None, score: bool = True) -> MissionTrace:
    """Fly one mission over ``gt`` and return its trace.

    The oracle seed is ``seed`` when given, otherwise ``params.seed``. With
    ``score=False`` the ground truth drives the oracle only: no per-image or
    field-level scores are recorded.
    """
    if seed is not None:
        params = replace(params, seed=seed)
    kind = strategy.kind
    if kind == FIXED and strategy.gsd not in ladder.rungs:
        raise SimError(f"fixed gsd {strategy.gsd} is not a ladder rung")
    if kind in (ADAPTIVE, NON_ADAPTIVE, LINEAR) and state is None and len(ladder) > 1:
        raise SimError(f"strategy {kind!r} needs a DecisionState")
    survey_gsd = strategy.gsd if kind == FIXED else ladder.survey
    trace = MissionTrace(strategy=strategy.name, seed=params.seed, fused=FusedMap.like(gt))
    scored_gt = gt if score else None
    m = _Mission(scored_gt, cam, params, tm, trace)
    h_max = altitude_at_gsd(cam, survey_gsd)

    for region_id, wp in enumerate(survey_grid(gt.extent, cam, survey_gsd)):
        m.fly_to(wp)
        top = take_image(gt, cam, wp, params)
        m.log_image(top, region_id)
        if kind == FIXED or len(ladder) < 2:
            continue
        v = vegetation_ratio(top.seg)
        if kind == LINEAR:
            decision = decide_linear(v, state.v_lo, state.v_hi, ladder)
        else:
            decision = decide(state, v)
        trace.events.append({"type": "decision", "region": region_id, "v": v, "action": decision.action,
                             "target_gsd": decision.target_gsd, "predicted_gain": decision.predicted_gain})
        if not decision.descend:
            continue
        images, local = inspect_region(gt, cam, wp, decision.target_gsd, params, entry=(wp.x, wp.y))
        for im in images:
            m.fly_to(im.waypoint)
            m.log_image(im, region_id)
        v_child = vegetation_ratio(local.labels)
        obs = Observation(region_id=region_id, v_hmax=v, gsd_child=decision.target_gsd,
                          delta_v=v - v_child, delta_h=h_max - altitude_at_gsd(cam, decision.target_gsd))
        if kind == ADAPTIVE:
            state = record_and_adapt(state, obs)
            trace.events.append({"type": "adapt", "region": region_id, "delta_v": obs.delta_v,
                                 "delta_h": obs.delta_h})
    if score:
        trace.field_stats = trace.fused.stats(gt)
    trace.final_state = state
    return trace


# ---------------------------------------------------------------------------
# Strategy comparison
# ---------------------------------------------------------------------------

CSV_HEADER = ("strategy", "seed", "field_miou", "total_time_s", "n_images", "n_descents")


@dataclass(frozen=True)
class ComparisonRow:
    strategy: str
    seed: int
    field_miou: float
    total_time_s: float
    n_images: int
    n_descents: int
    per_image: dict = field(default_factory=dict, compare=False)

    def csv_values(self) -> tuple:
        return (self.strategy, self.seed, repr(self.field_miou), repr(self.total_time_s),
                self.n_images, self.n_descents)


def per_image_by_rung(trace: MissionTrace) -> dict[float, list[float]]:
    out: dict[float, list[float]] = {}
    for e in trace.images:
        if e["miou"] is not None:
            out.setdefault(e["gsd"], []).append(e["miou"])
    return out


def compare_strategies(gt: LabelGrid, cam: CameraModel, ladder: GsdLadder, params: OracleParams,
                       tm: TimeModel, strategies: Sequence[Strategy], seeds: Sequence[int],
                       state: DecisionState | None = None) -> list[ComparisonRow]:
    """One row per (strategy, seed); every strategy sees the same oracle seed."""
    rows = []
    for s in seeds:
        for strat in strategies:
            trace = run_mission(gt, cam, ladder, params, tm, strat, state, seed=s)
            rows.append(ComparisonRow(strat.name, s, trace.field_stats.miou, trace.total_time_s,
                                      trace.n_images, trace.n_descents, per_image_by_rung(trace)))
    rows.sort(key=lambda r: (r.strategy, r.seed))
    return rows


def per_image_summary(rows: Sequence[ComparisonRow]) -> list[tuple[str, float, float, float, int]]:
    """(strategy, rung, mean_miou, std_miou, n) pooled over seeds."""
    pooled: dict[tuple[str, float], list[float]] = {}
    for r in rows:
        for g, values in r.per_image.items():
            pooled.setdefault((r.strategy, g), []).extend(values)
    out = []
    for (name, g), values in sorted(pooled.items()):
        arr = np.asarray(values)
        out.append((name, g, float(arr.mean()), float(arr.std()), int(arr.size)))
    return out
