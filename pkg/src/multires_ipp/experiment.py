"""Experiment configuration and the strategy x seed comparison matrix."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .camera import CameraModel, GsdLadder
from .field import FieldSpec, LabelGrid, generate_field
from .oracle import OracleParams
from .planner import DecisionState, PlannerSettings, initialize
from .sim import (CSV_HEADER, ComparisonRow, Strategy, TimeModel, per_image_by_rung, per_image_summary,
                  run_mission)


class ConfigError(ValueError):
    pass


# Small square sensor for desk-scale simulation: a 3.0 cm/px footprint is 3 m.
SIM_CAMERA = CameraModel(image_width_px=100, image_height_px=100)

# Sparse, dense weed patches: the heterogeneous field used for strategy comparisons.
CLUSTERED_FIELD = FieldSpec(weed_cluster_count=4, weed_density=0.8)


@dataclass
class PlannerOverrides:
    v_lo: Optional[float] = None
    v_hi: Optional[float] = None
    v_lo_percentile: float = 25.0
    v_hi_percentile: float = 90.0
    tau: Optional[float] = None
    K: Optional[int] = None
    optimize: bool = True

    def settings(self) -> PlannerSettings:
        base = PlannerSettings()
        return PlannerSettings(v_lo_percentile=self.v_lo_percentile, v_hi_percentile=self.v_hi_percentile,
                               gain_threshold=base.gain_threshold if self.tau is None else self.tau,
                               refit_period=base.refit_period if self.K is None else self.K,
                               optimize=self.optimize)

    def apply(self, state: DecisionState) -> DecisionState:
        """Overlay the explicitly set overrides on a (possibly loaded) state."""
        changes = {k: v for k, v in (("v_lo", self.v_lo), ("v_hi", self.v_hi), ("gain_threshold", self.tau),
                                     ("refit_period", self.K)) if v is not None}
        return replace(state, **changes) if changes else state


@dataclass
class ExperimentConfig:
    camera: CameraModel = SIM_CAMERA
    ladder: GsdLadder = field(default_factory=GsdLadder)
    oracle: OracleParams = field(default_factory=OracleParams)
    time_model: TimeModel = field(default_factory=TimeModel)
    training_field: Optional[FieldSpec] = field(default_factory=lambda: replace(CLUSTERED_FIELD, seed=1000))
    testing_field: Optional[FieldSpec] = CLUSTERED_FIELD
    strategies: tuple[str, ...] = ("fixed_3.0", "fixed_2.5", "fixed_2.0", "fixed_1.5", "fixed_1.0",
                                   "linear", "non_adaptive", "adaptive")
    seeds: tuple[int, ...] = tuple(range(20))
    vary_field_seed: bool = True
    output_dir: str = "out"
    planner: PlannerOverrides = field(default_factory=PlannerOverrides)

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        for s in self.strategies:
            strat = Strategy.parse(s)
            if strat.gsd is not None and not any(abs(strat.gsd - g) < 1e-12 for g in self.ladder.rungs):
                raise ConfigError(f"strategy {s} uses a gsd outside the ladder")

    # -- (de)serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "camera": asdict(self.camera),
            "ladder_cm_per_px": [round(g * 100, 10) for g in self.ladder.rungs],
            "oracle": self.oracle.to_dict(),
            "time_model": asdict(self.time_model),
            "training_field": _spec_dict(self.training_field),
            "testing_field": _spec_dict(self.testing_field),
            "strategies": list(self.strategies),
            "seeds": list(self.seeds),
            "vary_field_seed": self.vary_field_seed,
            "output_dir": self.output_dir,
            "planner": asdict(self.planner),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {"camera", "ladder_cm_per_px", "oracle", "time_model", "training_field", "testing_field",
                 "strategies", "seeds", "vary_field_seed", "output_dir", "planner"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw: dict[str, Any] = {}
        try:
            if "camera" in d:
                kw["camera"] = CameraModel(**d["camera"])
            if "ladder_cm_per_px" in d:
                kw["ladder"] = GsdLadder(tuple(g / 100.0 for g in d["ladder_cm_per_px"]))
            if "oracle" in d:
                kw["oracle"] = OracleParams.from_dict({**OracleParams().to_dict(), **d["oracle"]})
            if "time_model" in d:
                kw["time_model"] = TimeModel(**d["time_model"])
            for key in ("training_field", "testing_field"):
                if key in d:
                    kw[key] = None if d[key] is None else _spec_from(d[key])
            if "strategies" in d:
                kw["strategies"] = tuple(d["strategies"])
            if "seeds" in d:
                kw["seeds"] = tuple(int(s) for s in d["seeds"])
            for key in ("vary_field_seed", "output_dir"):
                if key in d:
                    kw[key] = d[key]
            if "planner" in d:
                kw["planner"] = PlannerOverrides(**d["planner"])
            return cls(**kw)
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    def override(self, dotted: str, value: str) -> "ExperimentConfig":
        """Return a copy with one scalar replaced, e.g. ``planner.tau=0.05``."""
        d = self.to_dict()
        *path, leaf = dotted.split(".")
        node = d
        for key in path:
            if not isinstance(node.get(key), dict):
                raise ConfigError(f"no config section {dotted!r}")
            node = node[key]
        if leaf not in node or isinstance(node[leaf], (dict, list)):
            raise ConfigError(f"{dotted!r} is not a scalar config field")
        node[leaf] = json.loads(value) if value not in ("", None) and _looks_json(value) else value
        return ExperimentConfig.from_dict(d)

    # -- derived objects ------------------------------------------------------

    def testing_spec(self, seed: int) -> FieldSpec:
        if self.testing_field is None:
            raise ConfigError("config has no testing_field")
        if self.vary_field_seed:
            return replace(self.testing_field, seed=self.testing_field.seed + seed)
        return self.testing_field

    def strategy_objects(self) -> list[Strategy]:
        return [Strategy.parse(s) for s in self.strategies]


def _looks_json(text: str) -> bool:
    try:
        json.loads(text)
        return True
    except json.JSONDecodeError:
        return False


def _spec_dict(spec: FieldSpec | None) -> dict | None:
    if spec is None:
        return None
    d = asdict(spec)
    d["extent"] = list(spec.extent)
    return d


def _spec_from(d: dict) -> FieldSpec:
    names = {f.name for f in fields(FieldSpec)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown field-spec keys: {sorted(unknown)}")
    d = dict(d)
    if "extent" in d:
        d["extent"] = tuple(d["extent"])
    return FieldSpec(**d)


def build_state(config: ExperimentConfig, training: LabelGrid) -> DecisionState:
    state = initialize(training, config.camera, config.ladder, config.oracle, config.planner.settings())
    return config.planner.apply(state)


def run_comparison(config: ExperimentConfig, state: DecisionState | None = None,
                   testing: LabelGrid | None = None) -> list[ComparisonRow]:
    """Run every (strategy, seed) mission. Rows are sorted by (strategy, seed).

    ``testing`` pins one ground-truth field for all seeds; otherwise the
    testing field is regenerated per seed when ``vary_field_seed`` is set.
    """
    strategies = config.strategy_objects()
    if state is None and any(s.kind != "fixed" for s in strategies):
        if config.training_field is None:
            raise ConfigError("config has no training_field to initialize the planner from")
        state = build_state(config, generate_field(config.training_field))
    rows = []
    cached: tuple[int, LabelGrid] | None = None
    for seed in config.seeds:
        if testing is not None:
            gt = testing
        else:
            spec = config.testing_spec(seed)
            if cached is None or cached[0] != spec.seed:
                cached = (spec.seed, generate_field(spec))
            gt = cached[1]
        for strat in strategies:
            trace = run_mission(gt, config.camera, config.ladder, config.oracle, config.time_model,
                                strat, state, seed=seed)
            rows.append(ComparisonRow(strat.name, seed, trace.field_stats.miou, trace.total_time_s,
                                      trace.n_images, trace.n_descents, per_image_by_rung(trace)))
    rows.sort(key=lambda r: (r.strategy, r.seed))
    return rows


def write_comparison(rows: list[ComparisonRow], out_dir) -> dict[str, Path]:
    """Write the comparison table and the plot-data files; return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"compare": out / "compare.csv", "accuracy_vs_time": out / "accuracy_vs_time.csv",
             "per_image": out / "per_image.csv", "per_image_seed": out / "per_image_seed.csv"}
    with paths["compare"].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow(r.csv_values())

    by_strategy: dict[str, list[ComparisonRow]] = {}
    for r in rows:
        by_strategy.setdefault(r.strategy, []).append(r)
    with paths["accuracy_vs_time"].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("strategy", "mean_time_s", "std_time_s", "mean_field_miou", "std_field_miou", "n"))
        for name in sorted(by_strategy):
            t = np.array([r.total_time_s for r in by_strategy[name]])
            m = np.array([r.field_miou for r in by_strategy[name]])
            w.writerow((name, repr(float(t.mean())), repr(float(t.std())), repr(float(m.mean())),
                        repr(float(m.std())), len(t)))

    with paths["per_image"].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("strategy", "gsd_cm_per_px", "mean_miou", "std_miou", "n"))
        for name, g, mean, std, n in per_image_summary(rows):
            w.writerow((name, f"{g * 100:.1f}", repr(mean), repr(std), n))

    # unpooled version, for paired per-seed comparisons
    with paths["per_image_seed"].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("strategy", "seed", "gsd_cm_per_px", "mean_miou", "n"))
        for r in rows:
            for g in sorted(r.per_image, reverse=True):
                values = r.per_image[g]
                w.writerow((r.strategy, r.seed, f"{g * 100:.1f}", repr(float(np.mean(values))), len(values)))
    return paths
