"""Command-line front end.

    multires-ipp generate [--config cfg.json]
    multires-ipp init     [--field training.pgm]
    multires-ipp run      --strategy adaptive [--field testing.pgm] [--state decision_state.json]
    multires-ipp compare  [--state decision_state.json] [--field testing.pgm]

Every subcommand accepts ``--config``, ``--out`` and repeated ``--set
section.key=value`` overrides. The output directory is taken from ``--out``,
then the ``MULTIRES_IPP_OUT`` environment variable, then the config.

Exit status: 0 success, 1 usage error, 2 data or configuration error.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .experiment import ConfigError, ExperimentConfig, build_state, run_comparison, write_comparison
from .field import FieldError, RasterParseError, generate_field, read_raster, write_raster
from .gp import GPError
from .planner import DecisionState, DegenerateTrainingField, PlannerError
from .sim import FIXED, SimError, Strategy, run_mission

OUT_ENV = "MULTIRES_IPP_OUT"
TRAINING_RASTER = "training.pgm"
TESTING_RASTER = "testing.pgm"
STATE_FILE = "decision_state.json"

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        config = config.override(key.strip(), value.strip())
    return config


def _out_dir(args, config: ExperimentConfig) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or config.output_dir)


def _load_state(path: Path, config: ExperimentConfig) -> DecisionState:
    if not path.exists():
        raise FileNotFoundError(f"decision state {path} not found (run `init` first)")
    return config.planner.apply(DecisionState.loads(path.read_text()))


def cmd_generate(args, config: ExperimentConfig) -> int:
    out = _out_dir(args, config)
    specs = [(name, spec) for name, spec in ((TRAINING_RASTER, config.training_field),
                                             (TESTING_RASTER, config.testing_field)) if spec is not None]
    if not specs:
        print("multires-ipp: warning: no field specs in config; nothing to generate", file=sys.stderr)
        return EXIT_OK
    out.mkdir(parents=True, exist_ok=True)
    for name, spec in specs:
        write_raster(generate_field(spec), out / name)
        print(out / name)
    return EXIT_OK


def cmd_init(args, config: ExperimentConfig) -> int:
    out = _out_dir(args, config)
    path = Path(args.field) if args.field else out / TRAINING_RASTER
    if not path.exists():
        raise FileNotFoundError(f"training raster {path} not found (run `generate` first)")
    state = build_state(config, read_raster(path))
    out.mkdir(parents=True, exist_ok=True)
    target = out / STATE_FILE
    target.write_text(state.dumps())
    print(f"|O| = {len(state.set_O)}  |I| = {len(state.set_I)}")
    for name, model in (("gp_O", state.gp_O), ("gp_I", state.gp_I)):
        h = model.hyper
        print(f"{name}: length_scale={h.length_scale:.6g} signal_variance={h.signal_variance:.6g} "
              f"noise_variance={h.noise_variance:.6g}")
    print(f"v_lo = {state.v_lo:.6g}  v_hi = {state.v_hi:.6g}  proxy_alpha = {state.proxy_alpha:.6g}")
    print(target)
    return EXIT_OK


def cmd_run(args, config: ExperimentConfig) -> int:
    out = _out_dir(args, config)
    try:
        strategy = Strategy.parse(args.strategy)
    except (SimError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    field_path = Path(args.field) if args.field else out / TESTING_RASTER
    if not field_path.exists():
        raise FileNotFoundError(f"field raster {field_path} not found")
    gt = read_raster(field_path)
    state = None
    if strategy.kind != FIXED:
        state = _load_state(Path(args.state) if args.state else out / STATE_FILE, config)
    seed = args.seed if args.seed is not None else config.oracle.seed
    trace = run_mission(gt, config.camera, config.ladder, config.oracle, config.time_model, strategy,
                        state, seed=seed)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"trace_{strategy.name}_seed{seed}.jsonl").write_text(trace.to_jsonl())
    print(f"{trace.field_stats.miou!r} {trace.total_time_s!r} {trace.n_images} {trace.n_descents}")
    return EXIT_OK


def cmd_compare(args, config: ExperimentConfig) -> int:
    out = _out_dir(args, config)
    state = _load_state(Path(args.state), config) if args.state else None
    testing = read_raster(args.field) if args.field else None
    rows = run_comparison(config, state=state, testing=testing)
    for path in write_comparison(rows, out).values():
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and the config)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one scalar config value, e.g. planner.tau=0.05")

    parser = _Parser(prog="multires-ipp", description="Multi-resolution UAV field mapping simulator.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", parents=[common], help="write training/testing field rasters")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("init", parents=[common], help="fit the decision state on the training field")
    p.add_argument("--field", help=f"training raster (default <out>/{TRAINING_RASTER})")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("run", parents=[common], help="fly one mission")
    p.add_argument("--strategy", required=True, help="fixed_<cm/px>, non_adaptive, adaptive or linear")
    p.add_argument("--field", help=f"ground-truth raster (default <out>/{TESTING_RASTER})")
    p.add_argument("--state", help=f"decision state (default <out>/{STATE_FILE})")
    p.add_argument("--seed", type=int, help="oracle seed (default: the config's oracle seed)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", parents=[common], help="run the strategy x seed matrix")
    p.add_argument("--state", help="reuse a decision state instead of initializing from the config")
    p.add_argument("--field", help="pin one ground-truth raster for every seed")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, or a usage error already reported by argparse
        return int(exc.code or 0)
    try:
        config = _load_config(args)
        return args.func(args, config)
    except UsageError as exc:
        print(f"multires-ipp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DegenerateTrainingField as exc:
        print(f"multires-ipp: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, FieldError, RasterParseError, PlannerError, SimError, GPError, OSError) as exc:
        print(f"multires-ipp: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
