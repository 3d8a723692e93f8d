"""Fixed-timestep simulation runner.

Drives one scripted agent through a scenario with either technique, keeping
two rig poses side by side: the world pose (virtual) and the physical pose
(tracked room). Physical steps always apply 1:1 to the physical pose. While
the rig is parented to a cabin, the world pose follows the traversal
kinematics; otherwise world and physical move together.

The physical frame is re-registered twice per leg (when a leg starts, so the
next cabin's footprint sits inside the playspace, and on arrival, so the
local task area is centered). This mirrors how a real course is laid out to
fold through the tracked room; walked distances integrate from steps and the
world pose stays continuous, so no metric is affected.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .control import (
    AimModel,
    EffectKind,
    PhaseDurations,
    Teleporter,
    TeleportConfig,
    TunnelMachine,
    TunnelPhase,
    invoke_tunnel,
    teleport_aim,
)
from .geometry import UP, Pose, Quat, Vec2, Vec3
from .metrics import TraceEvent
from .scenario import (
    AgentContext,
    AgentProfile,
    Done,
    HandleItem,
    PLATFORM_SETBACK,
    Press,
    Scenario,
    ScriptedAgent,
    Technique,
    TeleportTo,
    Wait,
    WalkAlong,
    WalkToPoint,
    build_default_scenario,
    scenario_from_dict,
)
from .tunnel import (
    AdaptiveToPlayspace,
    FixedCabinLength,
    FixedGain,
    GainStrategy,
    RigParent,
    TraversalState,
    TunnelParams,
    TunnelSpec,
    WindowLayout,
    advance_traversal,
    traversal_pose,
)

__all__ = ["SimulationError", "SimSettings", "Engine", "run_simulation", "SCHEMA_VERSION"]

SCHEMA_VERSION = 1
BODY_CLEARANCE = 0.3  # rig counts as outside the cabin this far past a portal
MAX_SIM_SECONDS = 7200.0


class SimulationError(RuntimeError):
    """A run violated its own preconditions (agent stuck, invocation failed)."""


def _strategy_to_dict(s: GainStrategy) -> dict:
    if isinstance(s, FixedGain):
        return {"kind": "fixed-gain", "value": s.gain}
    if isinstance(s, FixedCabinLength):
        return {"kind": "fixed-cabin-length", "value": s.cabin_length}
    return {"kind": "adaptive", "fit_margin": s.fit_margin}


def _strategy_from_dict(d: dict) -> GainStrategy:
    kind = d["kind"]
    if kind == "fixed-gain":
        return FixedGain(float(d["value"]))
    if kind == "fixed-cabin-length":
        return FixedCabinLength(float(d["value"]))
    if kind == "adaptive":
        return AdaptiveToPlayspace(float(d.get("fit_margin", 0.0)))
    raise ValueError(f"unknown gain strategy kind {kind!r}")


@dataclass(frozen=True)
class SimSettings:
    """Everything one deterministic run depends on."""

    scenario: Scenario
    profile: AgentProfile
    strategy: GainStrategy = field(default_factory=lambda: FixedGain(30.0))
    params: TunnelParams = field(default_factory=TunnelParams)
    durations: PhaseDurations = field(default_factory=PhaseDurations)
    teleport: TeleportConfig = field(default_factory=TeleportConfig)
    seed: int = 0
    tick_rate: int = 90
    flow_every: int = 15
    flow_fov_deg: float = 110.0
    flow_rays: int = 256
    flow_distances: tuple[float, ...] = (10.0, 50.0)

    def __post_init__(self) -> None:
        if self.tick_rate <= 0:
            raise ValueError("tick rate must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit value")
        if self.flow_every < 0:
            raise ValueError("flow_every must be >= 0")

    def to_config_dict(self) -> dict:
        return {
            "scenario": self.scenario.to_dict(),
            "profile": self.profile.to_dict(),
            "gain_strategy": _strategy_to_dict(self.strategy),
            "params": {
                "width": self.params.width,
                "height": self.params.height,
                "fit_margin": self.params.fit_margin,
                "windows": {
                    "stripe_count": self.params.windows.stripe_count,
                    "stripe_height": self.params.windows.stripe_height,
                    "stripe_spacing": self.params.windows.stripe_spacing,
                    "sill_height": self.params.windows.sill_height,
                },
            },
            "durations": {
                "rising_half": self.durations.rising_half,
                "extending": self.durations.extending,
                "rising_full": self.durations.rising_full,
                "doors_opening": self.durations.doors_opening,
                "doors_closing": self.durations.doors_closing,
                "retracting": self.durations.retracting,
                "schedule": list(self.durations.schedule),
            },
            "teleport": {
                "max_range": self.teleport.max_range,
                "aim_model": self.teleport.aim_model.value,
                "cooldown": self.teleport.cooldown,
                "clamp_to_range": self.teleport.clamp_to_range,
                "launch_speed": self.teleport.launch_speed,
            },
            "seed": self.seed,
            "tick_rate": self.tick_rate,
            "flow_every": self.flow_every,
            "flow_fov_deg": self.flow_fov_deg,
            "flow_rays": self.flow_rays,
            "flow_distances": list(self.flow_distances),
        }

    @staticmethod
    def from_config_dict(cfg: dict) -> SimSettings:
        tp = cfg["teleport"]
        pr = cfg["params"]
        du = cfg["durations"]
        return SimSettings(
            scenario=scenario_from_dict(cfg["scenario"]),
            profile=AgentProfile.from_dict(cfg["profile"]),
            strategy=_strategy_from_dict(cfg["gain_strategy"]),
            params=TunnelParams(
                width=pr["width"],
                height=pr["height"],
                fit_margin=pr["fit_margin"],
                windows=WindowLayout(**pr["windows"]),
            ),
            durations=PhaseDurations(
                rising_half=du["rising_half"],
                extending=du["extending"],
                rising_full=du["rising_full"],
                doors_opening=du["doors_opening"],
                doors_closing=du["doors_closing"],
                retracting=du["retracting"],
                schedule=tuple(du["schedule"]),
            ),
            teleport=TeleportConfig(
                max_range=tp["max_range"],
                aim_model=AimModel(tp["aim_model"]),
                cooldown=tp["cooldown"],
                clamp_to_range=tp["clamp_to_range"],
                launch_speed=tp["launch_speed"],
            ),
            seed=int(cfg["seed"]),
            tick_rate=int(cfg["tick_rate"]),
            flow_every=int(cfg["flow_every"]),
            flow_fov_deg=float(cfg["flow_fov_deg"]),
            flow_rays=int(cfg["flow_rays"]),
            flow_distances=tuple(cfg["flow_distances"]),
        )


class Engine:
    """One deterministic simulation instance."""

    def __init__(self, settings: SimSettings):
        self.s = settings
        self.dt = 1.0 / settings.tick_rate
        self.rng = random.Random(settings.seed)
        self.agent = ScriptedAgent(settings.scenario, settings.profile, settings.tick_rate)
        self.machine = TunnelMachine(settings.durations)
        self.teleporter = Teleporter(settings.teleport)

        scen = settings.scenario
        eye = settings.profile.eye_height
        start = scen.checkpoints[0]
        center = scen.playspace.origin
        self.world = Vec3(start.x, eye, start.z)
        self.phys = Vec3(center.x, eye, center.y)
        self.yaw = self._yaw_of(scen.paths[0].direction()) if scen.paths else 0.0

        self.parented = False
        self.traversal: TraversalState | None = None
        self.active_spec: TunnelSpec | None = None
        self.active_leg: int | None = None
        self.leg_in_progress = False

        self.tick = 0
        self.seq = 0
        self.events: list[TraceEvent] = []
        self._teleported = False
        self._reanchored = False
        self._step_applied = Vec3()

    # -- helpers ---------------------------------------------------------

    @staticmethod
    def _yaw_of(direction: Vec3) -> float:
        return math.atan2(-direction.z, direction.x)

    def _now(self) -> float:
        return self.tick * self.dt

    def _emit(self, kind: str, data: dict) -> None:
        self.events.append(
            TraceEvent(
                seq=self.seq,
                tick=self.tick,
                t=self._now(),
                kind=kind,
                world=(self.world.x, self.world.y, self.world.z, self.yaw),
                phys=(self.phys.x, self.phys.y, self.phys.z, self.yaw),
                data=data,
            )
        )
        self.seq += 1

    def _emit_effects(self, effects) -> None:
        for eff in effects:
            if eff.kind is EffectKind.PHASE_CHANGED:
                self._emit(
                    "phase",
                    {"from": eff.previous.value, "to": eff.phase.value},
                )
                if eff.phase is TunnelPhase.IDLE:
                    self.active_spec = None

    # -- physical frame registration --------------------------------------

    def _reanchor_arrival(self, checkpoint: Vec3) -> None:
        """Center the local task area: physical image of the checkpoint = room center."""
        c = self.s.scenario.playspace.origin
        self.phys = Vec3(
            c.x + (self.world.x - checkpoint.x),
            self.phys.y,
            c.y + (self.world.z - checkpoint.z),
        )
        self._reanchored = True

    def _estimated_cabin_length(self, leg: int) -> float:
        d = self.s.scenario.lengths[leg]
        st = self.s.strategy
        if isinstance(st, FixedGain):
            return d / st.gain
        if isinstance(st, FixedCabinLength):
            return st.cabin_length
        half = min(self.s.scenario.playspace.half_extents.x, self.s.scenario.playspace.half_extents.y)
        return min(d, 2.0 * half - PLATFORM_SETBACK - 0.2)

    def _reanchor_leg_start(self, leg: int) -> None:
        """Stage the frame so platform approach and cabin footprint fit the room."""
        if self.s.profile.technique is not Technique.TUNNEL:
            return
        path = self.s.scenario.paths[leg]
        entry = path.start
        direction = path.direction()
        length = self._estimated_cabin_length(leg)
        c = self.s.scenario.playspace.origin
        offset = (length - PLATFORM_SETBACK) / 2.0
        image = Vec3(c.x - direction.x * offset, 0.0, c.y - direction.z * offset)
        self.phys = Vec3(
            image.x + (self.world.x - entry.x),
            self.phys.y,
            image.z + (self.world.z - entry.z),
        )
        self._reanchored = True

    # -- gait --------------------------------------------------------------

    def _bob_vertical(self, t: float) -> float:
        return self.s.profile.bob_amplitude_vertical * math.sin(
            2.0 * math.pi * self.s.profile.step_cadence * t
        )

    def _bob_lateral(self, t: float) -> float:
        return self.s.profile.bob_amplitude_lateral * math.sin(
            math.pi * self.s.profile.step_cadence * t
        )

    def _walk_step(self, direction: Vec3, t0: float, t1: float) -> Vec3:
        d = direction.normalized()
        move = d * (self.s.profile.walk_speed * (t1 - t0))
        perp = Vec3(-d.z, 0.0, d.x)
        step = (
            move
            + perp * (self._bob_lateral(t1) - self._bob_lateral(t0))
            + UP * (self._bob_vertical(t1) - self._bob_vertical(t0))
        )
        j = self.s.profile.jitter
        if j > 0.0:
            step = step + Vec3(self.rng.uniform(-j, j), 0.0, self.rng.uniform(-j, j))
        return step

    # -- step application with portal crossings ---------------------------

    def _apply_step(self, step: Vec3) -> None:
        self._step_applied = self._step_applied + step
        if self.parented:
            self._apply_parented(step)
        else:
            self._apply_unparented(step)

    def _apply_unparented(self, step: Vec3) -> None:
        spec = self.active_spec
        if spec is not None and self.machine.phase is TunnelPhase.OPEN:
            axis = spec.axis
            s0 = (self.world - spec.path.start).dot(axis)
            s1 = s0 + step.dot(axis)
            # a rig exactly on the plane counts as crossing once it moves inward
            if (s0 < 0.0 <= s1) or (s0 == 0.0 and s1 > 0.0):
                f = s0 / (s0 - s1)
                pre = step * f
                self.world = self.world + pre
                self.phys = self.phys + pre
                self._parent_rig()
                rest = step * (1.0 - f)
                self._apply_parented(rest)
                return
        self.world = self.world + step
        self.phys = self.phys + step

    def _parent_rig(self) -> None:
        spec = self.active_spec
        effects = self.machine.entry_crossed()
        self._emit_effects(effects)
        rel = self.world - spec.path.start
        self.traversal = TraversalState(
            x=0.0,
            lateral=Vec2(rel.dot(UP), rel.dot(spec.side)),
            rig_parent=RigParent.CABIN,
        )
        self.parented = True
        self.yaw = self._yaw_of(spec.axis)
        self._emit(
            "parent",
            {"leg": self.active_leg, "lateral": [self.traversal.lateral.x, self.traversal.lateral.y]},
        )

    def _apply_parented(self, step: Vec3) -> None:
        spec = self.active_spec
        trav = self.traversal
        forward = step.dot(spec.axis)
        new_x = trav.x + forward
        if new_x >= spec.cabin_length and forward > 0.0:
            f = (spec.cabin_length - trav.x) / forward
            f = min(max(f, 0.0), 1.0)
            pre = step * f
            self.phys = self.phys + pre
            trav, _ = advance_traversal(trav, spec, pre)
            trav = TraversalState(
                x=spec.cabin_length, lateral=trav.lateral, rig_parent=trav.rig_parent
            )
            self.traversal = trav
            self.world = traversal_pose(spec, trav).position
            self._unparent_rig(abort=False)
            rest = step * (1.0 - f)
            self._apply_unparented(rest)
            return
        if new_x <= 0.0 and forward < 0.0:
            f = trav.x / (-forward)
            f = min(max(f, 0.0), 1.0)
            pre = step * f
            self.phys = self.phys + pre
            trav, _ = advance_traversal(trav, spec, pre)
            trav = TraversalState(x=0.0, lateral=trav.lateral, rig_parent=trav.rig_parent)
            self.traversal = trav
            self.world = traversal_pose(spec, trav).position
            self._unparent_rig(abort=True)
            rest = step * (1.0 - f)
            self._apply_unparented(rest)
            return
        self.traversal, pose = advance_traversal(trav, spec, step)
        self.world = pose.position
        self.phys = self.phys + step

    def _unparent_rig(self, abort: bool) -> None:
        effects = self.machine.exit_crossed(abort=abort)
        self._emit_effects(effects)
        self.parented = False
        self._emit("unparent", {"leg": self.active_leg, "abort": abort})
        self.traversal = None

    # -- tick --------------------------------------------------------------

    def _drain_signals(self) -> None:
        for signal in self.agent.signals:
            if signal[0] == "task_action":
                _, action, item = signal
                self._emit(
                    "task",
                    {"checkpoint": self.agent.checkpoint, "action": action, "item": item},
                )
            elif signal[0] == "checkpoint_complete":
                self._emit("checkpoint", {"checkpoint": signal[1]})
            elif signal[0] == "leg_start":
                leg = signal[1]
                self.active_leg = leg
                self.leg_in_progress = True
                self._reanchor_leg_start(leg)
                self._emit(
                    "leg_start",
                    {
                        "leg": leg,
                        "from": leg,
                        "to": leg + 1,
                        "true_length": self.s.scenario.lengths[leg],
                    },
                )
        self.agent.signals.clear()

    def _do_press(self, leg: int) -> None:
        scen = self.s.scenario
        path = scen.paths[leg]
        entry_physical = Vec3(
            self.phys.x + (path.start.x - self.world.x),
            0.0,
            self.phys.z + (path.start.z - self.world.z),
        )
        try:
            spec, effects = invoke_tunnel(
                scen.anchors[leg],
                Pose(self.world, Quat.from_yaw(self.yaw)),
                self.machine,
                path,
                self.s.strategy,
                self.s.params,
                scen.playspace,
                entry_physical,
            )
        except Exception as exc:
            raise SimulationError(f"tunnel invocation failed on leg {leg}: {exc}") from exc
        self.active_spec = spec
        self._emit(
            "invoke",
            {
                "leg": leg,
                "gain": spec.gain,
                "cabin_length": spec.cabin_length,
                "hull_length": spec.hull_length,
            },
        )
        self._emit_effects(effects)

    def _do_teleport(self, goal: Vec3) -> None:
        pos_floor = Vec3(self.world.x, 0.0, self.world.z)
        span = Vec3(goal.x, 0.0, goal.z) - pos_floor
        dist = span.norm()
        max_r = self.s.teleport.max_range
        hop = Vec3(goal.x, 0.0, goal.z) if dist <= max_r else pos_floor + span * (0.95 * max_r / dist)
        aim_dir = (hop - self.world).normalized()
        result = teleport_aim(
            Pose(self.world, Quat.from_yaw(self.yaw)),
            aim_dir,
            self.s.teleport,
            self.s.scenario.navigable,
        )
        self._emit(
            "teleport_aim",
            {
                "valid": result.valid,
                "target": list(result.target.as_tuple()) if result.target else None,
                "reason": result.reason,
            },
        )
        if not result.valid:
            return
        rig = Pose(self.world, Quat.from_yaw(self.yaw))
        moved = self.teleporter.execute(rig, result.target, self._now())
        jump = (moved.position - self.world).horizontal_norm()
        frm = self.world
        self.world = moved.position
        self._teleported = True
        self._emit(
            "teleport_exec",
            {"from": list(frm.as_tuple()), "to": list(self.world.as_tuple()), "distance": jump},
        )

    def _check_leg_end(self) -> None:
        if not self.leg_in_progress or self.parented or self.active_leg is None:
            return
        scen = self.s.scenario
        goal = scen.checkpoints[self.active_leg + 1]
        if (self.world - goal).horizontal_norm() <= scen.arrival_radius:
            self._emit("leg_end", {"leg": self.active_leg})
            self.leg_in_progress = False
            self.agent.on_leg_complete()
            self._reanchor_arrival(goal)

    def _check_teardown(self) -> None:
        spec = self.active_spec
        if spec is None or self.parented or self.machine.phase is not TunnelPhase.TRAVERSING:
            return
        ahead = (self.world - spec.path.end).dot(spec.axis)
        behind = (self.world - spec.path.start).dot(spec.axis)
        if ahead >= BODY_CLEARANCE or behind <= -BODY_CLEARANCE:
            self._emit_effects(self.machine.cabin_cleared())

    def _teleport_ready(self) -> bool:
        last = self.teleporter._last_exec
        return (
            last is None
            or self.s.teleport.cooldown <= 0.0
            or self._now() - last >= self.s.teleport.cooldown
        )

    def step_once(self) -> bool:
        """Advance one tick; returns False once the agent is done."""
        t0 = self._now()
        t1 = t0 + self.dt
        self._teleported = False
        self._reanchored = False
        self._step_applied = Vec3()

        ctx = AgentContext(
            sim_time=t0,
            rig_world=self.world,
            parented=self.parented,
            phase=self.machine.phase,
            teleport_ready=self._teleport_ready(),
        )
        intent = self.agent.step(ctx)
        self._drain_signals()

        done = isinstance(intent, Done)
        pressed = isinstance(intent, Press)
        if isinstance(intent, WalkToPoint):
            target = intent.target
            to_target = Vec3(target.x - self.world.x, 0.0, target.z - self.world.z)
            dist = to_target.norm()
            reach = self.s.profile.walk_speed * self.dt
            if dist <= reach:
                # land exactly, settling any bob offset back to eye height
                step = Vec3(
                    to_target.x,
                    self.s.profile.eye_height - self.world.y,
                    to_target.z,
                )
                if dist > 1e-15:
                    self.yaw = self._yaw_of(to_target)
            else:
                d = to_target.normalized()
                self.yaw = self._yaw_of(d)
                step = self._walk_step(d, t0, t1)
            self._apply_step(step)
        elif isinstance(intent, WalkAlong):
            self.yaw = self._yaw_of(intent.direction)
            self._apply_step(self._walk_step(intent.direction, t0, t1))
        elif isinstance(intent, Press):
            self._do_press(intent.leg)
        elif isinstance(intent, TeleportTo):
            self._do_teleport(intent.target)
        elif isinstance(intent, (HandleItem, Wait, Done)):
            pass
        else:  # pragma: no cover - exhaustive over Intent
            raise SimulationError(f"unknown intent {intent!r}")

        self._check_leg_end()
        self._check_teardown()
        # pressing consumes its tick: the animation starts on the next one, so
        # the press-to-open interval in the trace is exactly the animation time
        if not pressed:
            self._emit_effects(self.machine.tick(self.dt))
        self._check_teardown()

        data = {
            "dx": self._step_applied.x,
            "dy": self._step_applied.y,
            "dz": self._step_applied.z,
            "par": self.parented,
        }
        if self.parented and self.traversal is not None:
            data["x"] = self.traversal.x
            data["leg"] = self.active_leg
        if self._teleported:
            data["tp"] = True
        if self._reanchored:
            data["ra"] = True
        self._emit("step", data)

        self.tick += 1
        if self._now() > MAX_SIM_SECONDS:
            raise SimulationError("simulation exceeded the maximum duration")
        return not done

    def run(self) -> tuple[dict, list[TraceEvent]]:
        while self.step_once():
            pass
        header = {
            "schema": SCHEMA_VERSION,
            "kind": "header",
            "seed": self.s.seed,
            "scenario_hash": self.s.scenario.scenario_hash(),
            "config": self.s.to_config_dict(),
        }
        return header, self.events


def run_simulation(settings: SimSettings) -> tuple[dict, list[TraceEvent]]:
    """Run to completion; returns the trace header and event list."""
    return Engine(settings).run()
