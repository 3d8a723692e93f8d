"""Command-line front door: run, compare, replay, validate, describe-defaults.

Exit codes: 0 success, 2 configuration or trace-format error, 3 simulation
error, 4 scenario mismatch in compare, 5 replay divergence.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from .engine import SimSettings, SimulationError, run_simulation
from .metrics import (
    CorruptTrace,
    ScenarioMismatch,
    SeedMismatch,
    compare,
    compute_report,
    read_trace,
    render_comparison_csv,
    render_comparison_text,
    render_report_csv,
    render_report_text,
    verify_trace,
    write_trace,
)
from .scenario import (
    AgentProfile,
    Scenario,
    build_default_scenario,
    scenario_from_toml,
)
from .tunnel import AdaptiveToPlayspace, FixedCabinLength, FixedGain, TunnelParams

__all__ = ["RunConfig", "main", "entrypoint"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SIMULATION = 3
EXIT_MISMATCH = 4
EXIT_DIVERGENCE = 5


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """One `run` invocation, resolved from flags and scenario files."""

    scenario_source: str = "default:L1"
    technique: str = "tunnel"
    gain_strategy: str = "fixed-gain"
    gain: float = 30.0
    cabin_length: float = 2.0
    seed: int = 0
    out_dir: str = "."
    tick_rate: int = 90
    walk_speed: float | None = None
    teleport_threshold: float | None = None
    flow_every: int = 15

    def __post_init__(self) -> None:
        if self.tick_rate <= 0:
            raise ConfigError("ticks-per-second must be > 0")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.technique not in ("tunnel", "teleport"):
            raise ConfigError(f"unknown technique {self.technique!r}")
        if self.gain_strategy == "fixed-gain" and self.gain < 1.0:
            raise ConfigError("gain must be >= 1")

    def load_scenario(self) -> tuple[Scenario, dict]:
        src = self.scenario_source
        if src.startswith("default:"):
            level = src.split(":", 1)[1]
            return build_default_scenario(level), {}
        if not Path(src).exists():
            raise ConfigError(f"scenario file not found: {src}")
        return scenario_from_toml(src)

    def to_settings(self) -> SimSettings:
        scenario, overrides = self.load_scenario()
        gain_cfg = overrides.get("gain", {})
        strategy_name = gain_cfg.get("strategy", self.gain_strategy)
        if strategy_name == "fixed-gain":
            strategy = FixedGain(float(gain_cfg.get("value", self.gain)))
        elif strategy_name == "fixed-cabin-length":
            strategy = FixedCabinLength(float(gain_cfg.get("value", self.cabin_length)))
        elif strategy_name == "adaptive":
            strategy = AdaptiveToPlayspace()
        else:
            raise ConfigError(f"unknown gain strategy {strategy_name!r}")

        profile_kwargs = dict(overrides.get("agent", {}))
        profile_kwargs["technique"] = self.technique
        if self.walk_speed is not None:
            profile_kwargs["walk_speed"] = self.walk_speed
        if self.teleport_threshold is not None:
            profile_kwargs["teleport_threshold"] = self.teleport_threshold
        try:
            profile = AgentProfile.from_dict(profile_kwargs)
            return SimSettings(
                scenario=scenario,
                profile=profile,
                strategy=strategy,
                seed=self.seed,
                tick_rate=self.tick_rate,
                flow_every=self.flow_every,
            )
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc


DEFAULTS = {
    "tick_rate_hz": 90,
    "gain": 30.0,
    "gain_strategy": "fixed-gain",
    "playspace_m": [4.0, 4.0],
    "cabin_width_m": TunnelParams().width,
    "cabin_height_m": TunnelParams().height,
    "window_stripe_count": 3,
    "window_stripe_height_m": 0.25,
    "window_stripe_spacing_m": 0.20,
    "window_sill_height_m": 1.0,
    "phase_rising_half_s": 0.5,
    "phase_extending_s": 1.0,
    "phase_rising_full_s": 0.5,
    "phase_doors_opening_s": 0.5,
    "phase_doors_closing_s": 0.5,
    "phase_retracting_s": 2.0,
    "teleport_aim_model": "straight_ray",
    "teleport_max_range_m": 12.0,
    "teleport_cooldown_s": 0.0,
    "agent_walk_speed_mps": 1.0,
    "agent_step_cadence_hz": 1.8,
    "agent_bob_vertical_m": 0.025,
    "agent_bob_lateral_m": 0.015,
    "agent_task_time_per_item_s": 15.0,
    "agent_teleport_threshold_m": 0.0,
    "scenario_path_lengths_m": [60.0, 75.0, 45.0, 75.0, 45.0, 60.0],
}


def _out_dir(arg_value: str | None) -> Path:
    if arg_value:
        return Path(arg_value)
    env = os.environ.get("TWS_OUT_DIR")
    return Path(env) if env else Path(".")


def _run_one(config: RunConfig, out: Path) -> int:
    settings = config.to_settings()
    out.mkdir(parents=True, exist_ok=True)
    try:
        header, events = run_simulation(settings)
    except SimulationError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    write_trace(out / "trace.jsonl", header, events)
    report = compute_report(header, events)
    (out / "report.txt").write_text(render_report_text(report), encoding="utf-8")
    (out / "report.csv").write_text(render_report_csv(report), encoding="utf-8")
    print(render_report_text(report), end="")
    print(f"trace:  {out / 'trace.jsonl'}")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        config = RunConfig(
            scenario_source=args.scenario,
            technique=args.technique,
            gain_strategy=args.gain_strategy,
            gain=args.gain,
            cabin_length=args.cabin_length,
            seed=args.seed,
            tick_rate=args.ticks_per_second,
            walk_speed=args.walk_speed,
            teleport_threshold=args.teleport_threshold,
            flow_every=args.flow_every,
        )
        config.to_settings()  # validate eagerly so config errors exit 2
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    base = _out_dir(args.out)
    if args.batch <= 1:
        return _run_one(config, base)

    jobs = []
    with concurrent.futures.ThreadPoolExecutor(max_workers=min(args.batch, 8)) as pool:
        for i in range(args.batch):
            cfg_i = replace(config, seed=config.seed + i)
            jobs.append(pool.submit(_run_one, cfg_i, base / f"run-{cfg_i.seed}"))
        codes = [j.result() for j in jobs]
    return max(codes)


def _load_report(run_dir: Path):
    trace = run_dir / "trace.jsonl"
    if not trace.exists():
        raise ConfigError(f"no trace.jsonl under {run_dir}")
    td = read_trace(trace)
    return compute_report(td.header, td.events)


def cmd_compare(args) -> int:
    try:
        report_a = _load_report(Path(args.run_a))
        report_b = _load_report(Path(args.run_b))
    except (ConfigError, CorruptTrace, SeedMismatch) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        summary = compare(report_a, report_b)
    except ScenarioMismatch as exc:
        print(f"scenario mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    text = render_comparison_text(summary)
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "compare.txt").write_text(text, encoding="utf-8")
        (out / "compare.csv").write_text(render_comparison_csv(summary), encoding="utf-8")
    return EXIT_OK


def cmd_replay(args) -> int:
    path = Path(args.trace)
    if not path.exists():
        print(f"config error: trace not found: {path}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.verify:
            result = verify_trace(path)
            if not result.ok:
                where = f"line {result.line}"
                if result.tick is not None:
                    where += f" (tick {result.tick})"
                print(f"divergence at {where}: {result.detail}", file=sys.stderr)
                return EXIT_DIVERGENCE
            print("verify: trace reproduced byte-for-byte")
            return EXIT_OK
        td = read_trace(path)
        report = compute_report(td.header, td.events)
    except (CorruptTrace, SeedMismatch) as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(render_report_text(report), end="")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        if args.scenario.startswith("default:"):
            scenario = build_default_scenario(args.scenario.split(":", 1)[1])
        else:
            scenario, _ = scenario_from_toml(args.scenario)
    except Exception as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(
        f"scenario ok: level {scenario.level_id}, {len(scenario.checkpoints)} checkpoints, "
        f"{scenario.leg_count()} paths, total {sum(scenario.lengths):.1f} m, "
        f"hash {scenario.scenario_hash()[:16]}"
    )
    return EXIT_OK


def cmd_describe_defaults(args) -> int:
    for key, value in DEFAULTS.items():
        print(f"{key} = {value}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="tws", description="Deterministic tunnel-walking locomotion simulator"
    )
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one scripted run and write trace + reports")
    run.add_argument("--scenario", default="default:L1",
                     help="default:L1, default:L2, or a scenario TOML file")
    run.add_argument("--technique", default="tunnel", choices=["tunnel", "teleport"])
    run.add_argument("--gain-strategy", default="fixed-gain",
                     choices=["fixed-gain", "fixed-cabin-length", "adaptive"])
    run.add_argument("--gain", type=float, default=30.0)
    run.add_argument("--cabin-length", type=float, default=2.0,
                     help="cabin length for --gain-strategy fixed-cabin-length")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", default=None, help="output directory (or $TWS_OUT_DIR)")
    run.add_argument("--ticks-per-second", type=int, default=90)
    run.add_argument("--walk-speed", type=float, default=None)
    run.add_argument("--teleport-threshold", type=float, default=None)
    run.add_argument("--flow-every", type=int, default=15,
                     help="flow sample period in ticks (0 disables)")
    run.add_argument("--batch", type=int, default=1,
                     help="run N seed-varied simulations concurrently")
    run.set_defaults(func=cmd_run)

    cmp_ = sub.add_parser("compare", help="compare two run directories")
    cmp_.add_argument("run_a")
    cmp_.add_argument("run_b")
    cmp_.add_argument("--out", default=None)
    cmp_.set_defaults(func=cmd_compare)

    rep = sub.add_parser("replay", help="recompute a report from a trace, or verify it")
    rep.add_argument("trace")
    rep.add_argument("--verify", action="store_true",
                     help="re-simulate from the embedded config and byte-compare")
    rep.set_defaults(func=cmd_replay)

    val = sub.add_parser("validate", help="check a scenario config")
    val.add_argument("scenario")
    val.set_defaults(func=cmd_validate)

    dd = sub.add_parser("describe-defaults", help="print all built-in defaults")
    dd.set_defaults(func=cmd_describe_defaults)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


def entrypoint() -> None:  # console script
    sys.exit(main())
