"""Trace logging, replay, and derived measures.

Traces are JSON lines: one header, one event per line, one footer. A trace is
a complete record of a run: re-running the simulation from the header's
embedded config reproduces the trace byte for byte, and every report quantity
is recomputable from the events alone.

The flow proxy quantifies perceived visual motion: a deterministic bundle of
view directions is classified against the cabin geometry; directions hitting
solid cabin surfaces see rest-frame content moving only with the walker's
physical motion, while windows and portals reveal world content moving with
the gained motion. Far-field content is sampled at fixed synthetic distances,
so the measure is ordinal, not photometric.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, Segment, Vec3
from .tunnel import TunnelParams, TunnelSpec, WindowLayout, classify_rays

__all__ = [
    "CorruptTrace",
    "SeedMismatch",
    "ScenarioMismatch",
    "TraceEvent",
    "TraceData",
    "write_trace",
    "read_trace",
    "event_to_line",
    "FlowSample",
    "make_direction_bundle",
    "flow_proxy",
    "LegMetrics",
    "MetricsReport",
    "compute_report",
    "estimation_errors",
    "ComparisonSummary",
    "compare",
    "replay",
    "VerificationResult",
    "verify_trace",
    "render_report_text",
    "render_report_csv",
    "render_comparison_text",
    "render_comparison_csv",
]


class CorruptTrace(ValueError):
    """Structurally damaged trace file; carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SeedMismatch(ValueError):
    """Header and footer disagree about the run's seed."""


class ScenarioMismatch(ValueError):
    """Reports under comparison come from different scenario geometry."""


# --- trace events -----------------------------------------------------------


@dataclass(frozen=True, slots=True)
class TraceEvent:
    seq: int
    tick: int
    t: float
    kind: str
    world: tuple[float, float, float, float]  # x, y, z, yaw
    phys: tuple[float, float, float, float]
    data: dict

    def to_jsonable(self) -> dict:
        return {
            "seq": self.seq,
            "tick": self.tick,
            "t": self.t,
            "kind": self.kind,
            "world": list(self.world),
            "phys": list(self.phys),
            "data": self.data,
        }

    @staticmethod
    def from_jsonable(d: dict) -> TraceEvent:
        return TraceEvent(
            seq=d["seq"],
            tick=d["tick"],
            t=d["t"],
            kind=d["kind"],
            world=tuple(d["world"]),
            phys=tuple(d["phys"]),
            data=d["data"],
        )


def _dump(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"))


def event_to_line(event: TraceEvent) -> str:
    return _dump(event.to_jsonable())


def trace_lines(header: dict, events: list[TraceEvent]) -> list[str]:
    footer = {
        "kind": "footer",
        "events": len(events),
        "final_tick": events[-1].tick if events else 0,
        "seed": header["seed"],
    }
    return [_dump(header)] + [event_to_line(e) for e in events] + [_dump(footer)]


def write_trace(path, header: dict, events: list[TraceEvent]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in trace_lines(header, events):
            fh.write(line)
            fh.write("\n")


@dataclass(frozen=True)
class TraceData:
    header: dict
    events: list[TraceEvent]
    footer: dict
    raw_lines: list[str]


def read_trace(path) -> TraceData:
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.read().splitlines()
    if len(raw) < 2:
        raise CorruptTrace("trace needs at least a header and a footer", max(len(raw), 1))
    try:
        header = json.loads(raw[0])
    except json.JSONDecodeError as exc:
        raise CorruptTrace(f"unparseable header: {exc.msg}", 1) from exc
    if not isinstance(header, dict) or header.get("kind") != "header":
        raise CorruptTrace("first line is not a trace header", 1)
    if "seed" not in header or "config" not in header:
        raise CorruptTrace("header is missing required fields", 1)

    last_no = len(raw)
    try:
        footer = json.loads(raw[-1])
    except json.JSONDecodeError as exc:
        raise CorruptTrace(f"unparseable footer: {exc.msg}", last_no) from exc
    if not isinstance(footer, dict) or footer.get("kind") != "footer":
        raise CorruptTrace("trace is truncated: final line is not a footer", last_no)

    events: list[TraceEvent] = []
    prev_tick = -1
    for i, line in enumerate(raw[1:-1], start=2):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorruptTrace(f"unparseable event: {exc.msg}", i) from exc
        try:
            ev = TraceEvent.from_jsonable(obj)
        except (KeyError, TypeError) as exc:
            raise CorruptTrace(f"malformed event: {exc}", i) from exc
        if ev.seq != i - 2:
            raise CorruptTrace(f"event sequence broken: expected {i - 2}, got {ev.seq}", i)
        if ev.tick < prev_tick:
            raise CorruptTrace("tick went backwards", i)
        prev_tick = ev.tick
        events.append(ev)

    if footer.get("events") != len(events):
        raise CorruptTrace(
            f"footer claims {footer.get('events')} events, found {len(events)}", last_no
        )
    if footer.get("seed") != header.get("seed"):
        raise SeedMismatch(
            f"header seed {header.get('seed')} != footer seed {footer.get('seed')}"
        )
    return TraceData(header, events, footer, raw)


# --- flow proxy ----------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class FlowSample:
    sim_time: float
    mean_angular_speed: float  # rad/s over the direction bundle
    visible_fraction_fast: float  # fraction of directions with gained world content
    counts: dict = field(default_factory=dict)


def make_direction_bundle(view_dir: Vec3, fov_deg: float = 110.0, count: int = 256) -> np.ndarray:
    """Deterministic low-discrepancy cone of unit directions around the gaze."""
    f = view_dir.normalized()
    up = Vec3(0.0, 1.0, 0.0)
    if abs(f.dot(up)) > 0.99:
        up = Vec3(1.0, 0.0, 0.0)
    s = f.cross(up).normalized()
    u = s.cross(f)
    cos_half = math.cos(math.radians(fov_deg) / 2.0)
    golden = math.pi * (3.0 - math.sqrt(5.0))
    i = np.arange(count, dtype=float)
    cos_a = 1.0 - (i + 0.5) / count * (1.0 - cos_half)
    sin_a = np.sqrt(np.maximum(0.0, 1.0 - cos_a**2))
    phi = i * golden
    fx = np.array(f.as_tuple())
    ux = np.array(u.as_tuple())
    sx = np.array(s.as_tuple())
    dirs = (
        cos_a[:, None] * fx[None, :]
        + (sin_a * np.cos(phi))[:, None] * ux[None, :]
        + (sin_a * np.sin(phi))[:, None] * sx[None, :]
    )
    return dirs


def _angular_speeds(
    dirs: np.ndarray, delta: np.ndarray, dt: float, distances
) -> np.ndarray:
    """Mean angular speed of fixed points at the sample distances along each ray."""
    total = np.zeros(dirs.shape[0])
    for r in distances:
        v0 = dirs * r  # point minus head-before
        v1 = v0 - delta[None, :]  # point minus head-after
        cross = np.cross(v0, v1)
        sin_term = np.linalg.norm(cross, axis=1)
        cos_term = np.einsum("ij,ij->i", v0, v1)
        total += np.arctan2(sin_term, cos_term) / dt
    return total / len(distances)


_FAST_FACTOR = 1.05  # world content counts as fast above this multiple of baseline

_WALL, _WINDOW, _PENTRY, _PEXIT, _OUTSIDE = 0, 1, 2, 3, 4
_COUNT_KEYS = {_WALL: "wall", _WINDOW: "window", _PENTRY: "portal_entry",
               _PEXIT: "portal_exit", _OUTSIDE: "outside"}


def flow_proxy(
    head_before: Pose,
    head_after: Pose,
    dt: float,
    sample_dirs: np.ndarray,
    *,
    spec: TunnelSpec | None = None,
    x_before: float = 0.0,
    x_after: float = 0.0,
    physical_delta: Vec3 | None = None,
    distances: tuple[float, ...] = (10.0, 50.0),
    sim_time: float = 0.0,
) -> FlowSample:
    """Angular-speed statistics of the visible content between two head poses.

    Inside a cabin (``spec`` given with the walked offsets at both instants),
    directions hitting solid surfaces see the cabin rest frame: content moving
    with the walker's physical motion only. Window and portal directions see
    world content moving with the full (gained) world motion. In the open
    world every direction sees world content. ``physical_delta`` supplies the
    physical motion for open-world samples; it defaults to the world delta.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    world_delta = np.array((head_after.position - head_before.position).as_tuple())

    if spec is not None:
        cabin_delta = np.array(spec.axis.as_tuple()) * ((spec.gain - 1.0) * (x_after - x_before))
        rest_delta = world_delta - cabin_delta
        basis = spec.basis_matrix()
        origin = spec.cabin_origin((spec.gain - 1.0) * x_before)
        head_local = basis @ np.array((head_before.position - origin).as_tuple())
        dirs_local = sample_dirs @ basis.T
        codes = classify_rays(spec, head_local, dirs_local)
    else:
        rest_delta = (
            np.array(physical_delta.as_tuple()) if physical_delta is not None else world_delta
        )
        codes = np.full(sample_dirs.shape[0], _OUTSIDE, dtype=np.int64)

    world_speeds = _angular_speeds(sample_dirs, world_delta, dt, distances)
    rest_speeds = _angular_speeds(sample_dirs, rest_delta, dt, distances)

    sees_world = codes != _WALL
    seen = np.where(sees_world, world_speeds, rest_speeds)
    fast = sees_world & (world_speeds > rest_speeds * _FAST_FACTOR)
    counts = {name: int(np.sum(codes == code)) for code, name in _COUNT_KEYS.items()}
    return FlowSample(
        sim_time=sim_time,
        mean_angular_speed=float(np.mean(seen)) if seen.size else 0.0,
        visible_fraction_fast=float(np.sum(fast)) / max(1, codes.size),
        counts=counts,
    )


# --- report ----------------------------------------------------------------------


@dataclass(frozen=True)
class LegMetrics:
    leg: int
    from_checkpoint: int
    to_checkpoint: int
    true_length: float
    start_tick: int
    end_tick: int
    travel_ticks: int
    travel_time: float
    physical_distance: float
    tunnel_distance: float
    local_distance: float
    virtual_distance: float

    def to_dict(self) -> dict:
        return {
            "leg": self.leg,
            "from": self.from_checkpoint,
            "to": self.to_checkpoint,
            "true_length": self.true_length,
            "start_tick": self.start_tick,
            "end_tick": self.end_tick,
            "travel_ticks": self.travel_ticks,
            "travel_time": self.travel_time,
            "physical_distance": self.physical_distance,
            "tunnel_distance": self.tunnel_distance,
            "local_distance": self.local_distance,
            "virtual_distance": self.virtual_distance,
        }


@dataclass(frozen=True)
class MetricsReport:
    technique: str
    seed: int
    scenario_hash: str
    level: str
    tick_rate: int
    legs: tuple[LegMetrics, ...]
    local_walk: float
    tunnel_walk: float
    total_walk: float
    invocations: int
    teleports: int
    aborts: int
    flow: dict  # phase -> {samples, mean, max, fast_fraction}
    true_lengths: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "technique": self.technique,
            "seed": self.seed,
            "scenario_hash": self.scenario_hash,
            "level": self.level,
            "tick_rate": self.tick_rate,
            "legs": [l.to_dict() for l in self.legs],
            "totals": {
                "local_walk": self.local_walk,
                "tunnel_walk": self.tunnel_walk,
                "total_walk": self.total_walk,
            },
            "invocations": self.invocations,
            "teleports": self.teleports,
            "aborts": self.aborts,
            "flow": self.flow,
            "true_lengths": list(self.true_lengths),
        }


def estimation_errors(true_lengths, estimates) -> tuple[float, float]:
    """(MSE, mean error) of externally supplied distance estimates."""
    if len(true_lengths) != len(estimates):
        raise ValueError("estimate count must match leg count")
    errs = [e - t for t, e in zip(true_lengths, estimates)]
    mse = sum(e * e for e in errs) / len(errs)
    me = sum(errs) / len(errs)
    return mse, me


def _leg_axes(header: dict) -> list[Vec3]:
    cps = [Vec3(*c) for c in header["config"]["scenario"]["checkpoints"]]
    return [Segment(a, b).direction() for a, b in zip(cps[:-1], cps[1:])]


def _rebuild_params(header: dict) -> TunnelParams:
    pr = header["config"]["params"]
    return TunnelParams(
        width=pr["width"],
        height=pr["height"],
        fit_margin=pr["fit_margin"],
        windows=WindowLayout(**pr["windows"]),
    )


def compute_report(header: dict, events: list[TraceEvent]) -> MetricsReport:
    """Derive all quantitative results from a trace; pure and replay-stable."""
    cfg = header["config"]
    scenario_cfg = cfg["scenario"]
    lengths = tuple(float(v) for v in scenario_cfg["lengths"])
    axes = _leg_axes(header)

    local_walk = 0.0
    tunnel_walk = 0.0
    total_walk = 0.0
    invocations = 0
    teleports = 0
    aborts = 0

    legs: list[LegMetrics] = []
    open_leg: dict | None = None
    last_leg_event = None  # alternation guard
    parent_world: tuple | None = None
    invoke_by_leg: dict[int, dict] = {}
    phase_timeline: list[tuple[int, str]] = []  # (tick, phase)
    step_rows: list[TraceEvent] = []

    for ev in events:
        k = ev.kind
        if k == "step":
            d = ev.data
            h = math.hypot(d["dx"], d["dz"])
            total_walk += h
            if d["par"]:
                tunnel_walk += h
            else:
                local_walk += h
            if open_leg is not None:
                open_leg["physical"] += h
                if d["par"]:
                    open_leg["tunnel"] += h
                else:
                    open_leg["local"] += h
            step_rows.append(ev)
        elif k == "leg_start":
            if last_leg_event == "leg_start":
                raise CorruptTrace("leg_start without a closing leg_end", ev.seq + 2)
            last_leg_event = "leg_start"
            open_leg = {
                "leg": ev.data["leg"],
                "start_tick": ev.tick,
                "start_t": ev.t,
                "physical": 0.0,
                "tunnel": 0.0,
                "local": 0.0,
                "virtual": 0.0,
                "true_length": ev.data["true_length"],
            }
        elif k == "leg_end":
            if last_leg_event != "leg_start" or open_leg is None:
                raise CorruptTrace("leg_end without a leg_start", ev.seq + 2)
            last_leg_event = "leg_end"
            leg = open_leg["leg"]
            legs.append(
                LegMetrics(
                    leg=leg,
                    from_checkpoint=leg,
                    to_checkpoint=leg + 1,
                    true_length=open_leg["true_length"],
                    start_tick=open_leg["start_tick"],
                    end_tick=ev.tick,
                    travel_ticks=ev.tick - open_leg["start_tick"],
                    travel_time=ev.t - open_leg["start_t"],
                    physical_distance=open_leg["physical"],
                    tunnel_distance=open_leg["tunnel"],
                    local_distance=open_leg["local"],
                    virtual_distance=open_leg["virtual"],
                )
            )
            open_leg = None
        elif k == "invoke":
            invocations += 1
            invoke_by_leg[ev.data["leg"]] = ev.data
        elif k == "parent":
            parent_world = ev.world
        elif k == "unparent":
            if ev.data.get("abort"):
                aborts += 1
            if parent_world is not None and open_leg is not None:
                axis = axes[open_leg["leg"]]
                delta = Vec3(
                    ev.world[0] - parent_world[0],
                    ev.world[1] - parent_world[1],
                    ev.world[2] - parent_world[2],
                )
                open_leg["virtual"] += abs(delta.dot(axis))
            parent_world = None
        elif k == "teleport_exec":
            teleports += 1
            if open_leg is not None:
                open_leg["virtual"] += ev.data["distance"]
        elif k == "phase":
            phase_timeline.append((ev.tick, ev.data["to"]))

    flow = _flow_aggregates(header, step_rows, phase_timeline, invoke_by_leg)

    return MetricsReport(
        technique=cfg["profile"]["technique"],
        seed=header["seed"],
        scenario_hash=header["scenario_hash"],
        level=scenario_cfg.get("level", "?"),
        tick_rate=cfg["tick_rate"],
        legs=tuple(legs),
        local_walk=local_walk,
        tunnel_walk=tunnel_walk,
        total_walk=total_walk,
        invocations=invocations,
        teleports=teleports,
        aborts=aborts,
        flow=flow,
        true_lengths=lengths,
    )


def _flow_aggregates(header, step_rows, phase_timeline, invoke_by_leg) -> dict:
    cfg = header["config"]
    every = cfg.get("flow_every", 0)
    if not every or len(step_rows) < 2:
        return {}
    params = _rebuild_params(header)
    cps = [Vec3(*c) for c in cfg["scenario"]["checkpoints"]]
    dt = 1.0 / cfg["tick_rate"]
    fov = cfg.get("flow_fov_deg", 110.0)
    rays = cfg.get("flow_rays", 256)
    distances = tuple(cfg.get("flow_distances", (10.0, 50.0)))

    specs: dict[int, TunnelSpec] = {}
    for leg, data in invoke_by_leg.items():
        path = Segment(cps[leg], cps[leg + 1])
        specs[leg] = TunnelSpec.build(path, data["gain"], params)

    by_tick = {ev.tick: ev for ev in step_rows}
    max_tick = step_rows[-1].tick

    def phase_at(tick: int) -> str:
        name = "idle"
        for tk, ph in phase_timeline:
            if tk > tick:
                break
            name = ph
        return name

    groups: dict[str, list[FlowSample]] = {}
    for s in range(every, max_tick + 1, every):
        r0 = by_tick.get(s - 1)
        r1 = by_tick.get(s)
        if r0 is None or r1 is None:
            continue
        if r1.data.get("tp") or r1.data.get("ra"):
            continue
        p0 = Pose(Vec3(r0.world[0], r0.world[1], r0.world[2]))
        p1 = Pose(Vec3(r1.world[0], r1.world[1], r1.world[2]))
        yaw = r0.world[3]
        view = Vec3(math.cos(yaw), 0.0, -math.sin(yaw))
        dirs = make_direction_bundle(view, fov, rays)
        par0, par1 = r0.data["par"], r1.data["par"]
        if par0 and par1 and r0.data.get("leg") == r1.data.get("leg"):
            spec = specs.get(r0.data["leg"])
            if spec is None:
                continue
            sample = flow_proxy(
                p0, p1, dt, dirs,
                spec=spec, x_before=r0.data["x"], x_after=r1.data["x"],
                distances=distances, sim_time=r1.t,
            )
        elif not par0 and not par1:
            pd = Vec3(
                r1.phys[0] - r0.phys[0], r1.phys[1] - r0.phys[1], r1.phys[2] - r0.phys[2]
            )
            sample = flow_proxy(
                p0, p1, dt, dirs, physical_delta=pd, distances=distances, sim_time=r1.t
            )
        else:
            continue  # parenting changed between the poses
        groups.setdefault(phase_at(s), []).append(sample)

    out = {}
    for phase, samples in sorted(groups.items()):
        speeds = [s.mean_angular_speed for s in samples]
        out[phase] = {
            "samples": len(samples),
            "mean": sum(speeds) / len(speeds),
            "max": max(speeds),
            "fast_fraction": sum(s.visible_fraction_fast for s in samples) / len(samples),
        }
    return out


# --- comparison --------------------------------------------------------------------


@dataclass(frozen=True)
class ComparisonSummary:
    scenario_hash: str
    technique_a: str
    technique_b: str
    rows: tuple[tuple[str, float, float, float, float | None], ...]
    flags: dict

    def to_dict(self) -> dict:
        return {
            "scenario_hash": self.scenario_hash,
            "technique_a": self.technique_a,
            "technique_b": self.technique_b,
            "rows": [
                {"metric": m, "a": a, "b": b, "difference": d, "ratio": r}
                for m, a, b, d, r in self.rows
            ],
            "flags": self.flags,
        }


def compare(report_a: MetricsReport, report_b: MetricsReport) -> ComparisonSummary:
    """Per-metric differences and ratios; techniques may differ, geometry may not."""
    if report_a.scenario_hash != report_b.scenario_hash:
        raise ScenarioMismatch(
            f"scenario hashes differ: {report_a.scenario_hash[:12]} vs "
            f"{report_b.scenario_hash[:12]}"
        )

    def total_time(r: MetricsReport) -> float:
        return sum(l.travel_time for l in r.legs)

    metrics = [
        ("total_travel_time_s", total_time(report_a), total_time(report_b)),
        ("local_walk_m", report_a.local_walk, report_b.local_walk),
        ("tunnel_walk_m", report_a.tunnel_walk, report_b.tunnel_walk),
        ("total_walk_m", report_a.total_walk, report_b.total_walk),
        ("teleports", float(report_a.teleports), float(report_b.teleports)),
        ("invocations", float(report_a.invocations), float(report_b.invocations)),
    ]
    rows = tuple(
        (name, a, b, a - b, (a / b) if b != 0.0 else None) for name, a, b in metrics
    )

    flags = {}
    pair = {report_a.technique: report_a, report_b.technique: report_b}
    if "tunnel" in pair and "teleport" in pair:
        tun, tel = pair["tunnel"], pair["teleport"]
        flags = {
            "tunnel_total_walk_exceeds_teleport": tun.total_walk > tel.total_walk,
            "tunnel_local_walk_exceeds_teleport": tun.local_walk > tel.local_walk,
            "tunnel_travel_time_exceeds_teleport": total_time(tun) > total_time(tel),
            "decomposition_holds": abs(
                tun.total_walk - (tun.local_walk + tun.tunnel_walk)
            )
            < 1e-9,
        }
    return ComparisonSummary(
        scenario_hash=report_a.scenario_hash,
        technique_a=report_a.technique,
        technique_b=report_b.technique,
        rows=rows,
        flags=flags,
    )


# --- replay / verification -----------------------------------------------------------


def replay(path) -> MetricsReport:
    """Reconstruct the report from a trace file without re-simulating."""
    td = read_trace(path)
    return compute_report(td.header, td.events)


@dataclass(frozen=True)
class VerificationResult:
    ok: bool
    line: int | None = None
    tick: int | None = None
    detail: str = ""


def verify_trace(path) -> VerificationResult:
    """Re-simulate from the embedded config and byte-compare every line."""
    td = read_trace(path)
    from .engine import SimSettings, run_simulation  # deferred to avoid a cycle

    try:
        settings = SimSettings.from_config_dict(td.header["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptTrace(f"embedded config is unusable: {exc}", 1) from exc
    header, events = run_simulation(settings)
    fresh = trace_lines(header, events)
    for i, (a, b) in enumerate(zip(td.raw_lines, fresh), start=1):
        if a != b:
            tick = None
            if 2 <= i <= len(td.events) + 1:
                tick = td.events[i - 2].tick
            return VerificationResult(False, line=i, tick=tick, detail="line differs")
    if len(td.raw_lines) != len(fresh):
        return VerificationResult(
            False, line=min(len(td.raw_lines), len(fresh)) + 1, detail="length differs"
        )
    return VerificationResult(True)


# --- rendering -------------------------------------------------------------------------


def render_report_text(report: MetricsReport) -> str:
    out = io.StringIO()
    out.write("run summary\n")
    out.write(f"  technique: {report.technique}\n")
    out.write(f"  level:     {report.level}\n")
    out.write(f"  seed:      {report.seed}\n")
    out.write(f"  scenario:  {report.scenario_hash[:16]}\n")
    out.write("\n")
    out.write("leg  from  to   true_m   time_s   phys_m  tunnel_m  local_m  virtual_m\n")
    for l in report.legs:
        out.write(
            f"{l.leg + 1:>3} {l.from_checkpoint:>5} {l.to_checkpoint:>3} "
            f"{l.true_length:>8.1f} {l.travel_time:>8.2f} {l.physical_distance:>8.3f} "
            f"{l.tunnel_distance:>9.3f} {l.local_distance:>8.3f} {l.virtual_distance:>10.3f}\n"
        )
    out.write("\n")
    out.write("totals\n")
    out.write(f"  local walk:  {report.local_walk:.3f} m\n")
    out.write(f"  tunnel walk: {report.tunnel_walk:.3f} m\n")
    out.write(f"  total walk:  {report.total_walk:.3f} m\n")
    out.write(
        f"  invocations: {report.invocations}   teleports: {report.teleports}"
        f"   aborts: {report.aborts}\n"
    )
    if report.flow:
        out.write("\nflow proxy (mean angular speed, rad/s)\n")
        for phase, agg in report.flow.items():
            out.write(
                f"  {phase:<14} mean {agg['mean']:>9.5f}  max {agg['max']:>9.5f}"
                f"  fast {agg['fast_fraction']:>6.3f}  n={agg['samples']}\n"
            )
    return out.getvalue()


def render_report_csv(report: MetricsReport) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(
        ["kind", "leg", "from", "to", "true_length_m", "travel_time_s",
         "physical_m", "tunnel_m", "local_m", "virtual_m"]
    )
    for l in report.legs:
        w.writerow(
            ["leg", l.leg + 1, l.from_checkpoint, l.to_checkpoint, l.true_length,
             l.travel_time, l.physical_distance, l.tunnel_distance, l.local_distance,
             l.virtual_distance]
        )
    w.writerow(
        ["totals", "", "", "", "", "", report.total_walk, report.tunnel_walk,
         report.local_walk, ""]
    )
    return out.getvalue()


def render_comparison_text(cs: ComparisonSummary) -> str:
    out = io.StringIO()
    out.write(f"comparison: {cs.technique_a} (a) vs {cs.technique_b} (b)\n")
    out.write(f"  scenario: {cs.scenario_hash[:16]}\n\n")
    out.write(f"{'metric':<24} {'a':>12} {'b':>12} {'a-b':>12} {'a/b':>8}\n")
    for name, a, b, diff, ratio in cs.rows:
        ratio_s = f"{ratio:.3f}" if ratio is not None else "n/a"
        out.write(f"{name:<24} {a:>12.3f} {b:>12.3f} {diff:>12.3f} {ratio_s:>8}\n")
    if cs.flags:
        out.write("\ndirection of effect\n")
        for key, val in cs.flags.items():
            out.write(f"  {key}: {'yes' if val else 'no'}\n")
    return out.getvalue()


def render_comparison_csv(cs: ComparisonSummary) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["metric", "a", "b", "difference", "ratio"])
    for name, a, b, diff, ratio in cs.rows:
        w.writerow([name, a, b, diff, ratio if ratio is not None else ""])
    for key, val in cs.flags.items():
        w.writerow([f"flag:{key}", int(val), "", "", ""])
    return out.getvalue()
