"""Testbed world model and scripted agents.

The default scenario is a staircase polyline of seven checkpoints joined by
six straight paths of 60/75/45/75/45/60 m with alternating +/-90 degree
turns. Each checkpoint carries a three-item sort task (pick an item at a
central point, place it at one of three drop points 1.5-2.5 m away) and an
invocation platform for the tunnel to the next checkpoint. Levels L1 and L2
share the geometry and differ only in cosmetic theming.

Agents replace human subjects: a TunnelWalker walks everywhere and rides
tunnels between checkpoints; a TeleportUser teleports whenever the distance
to its goal exceeds its step-vs-teleport threshold.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, replace

from .control import InvocationAnchor, TunnelPhase
from .geometry import PlaySpace, Segment, Vec2, Vec3

__all__ = [
    "PlayspaceTooSmall",
    "Rect",
    "NavigableRegion",
    "CheckpointTask",
    "Scenario",
    "AgentProfile",
    "TaskState",
    "Technique",
    "build_default_scenario",
    "scenario_from_dict",
    "scenario_from_toml",
    "DEFAULT_PATH_LENGTHS",
    "MIN_PLAYSPACE_HALF",
    "Intent",
    "WalkToPoint",
    "WalkAlong",
    "Press",
    "TeleportTo",
    "HandleItem",
    "Wait",
    "Done",
    "AgentContext",
    "ScriptedAgent",
    "agent_step",
]


DEFAULT_PATH_LENGTHS = (60.0, 75.0, 45.0, 75.0, 45.0, 60.0)
MIN_PLAYSPACE_HALF = 2.0  # 4 x 4 m minimum tracking area

PLATFORM_SETBACK = 0.9  # platform center this far behind the tunnel entry
PLATFORM_RADIUS = 0.5
EGRESS_CLEARANCE = 0.6  # walk this far past the exit before turning away
CORRIDOR_HALF_WIDTH = 4.0
CHECKPOINT_HALF_AREA = 4.0

# Task point offsets from the checkpoint center (x along the leg direction is
# irrelevant here; offsets are in world x/z). Pick-to-drop distances fall in
# the 1.5-2.5 m band.
_PICKUP_OFFSET = (-0.9, 0.4)
_DROP_OFFSETS = ((0.9, 1.1), (1.2, 0.1), (0.8, -0.9))


class PlayspaceTooSmall(ValueError):
    """Tracking area below the supported minimum."""


class Technique(enum.Enum):
    TUNNEL = "tunnel"
    TELEPORT = "teleport"


@dataclass(frozen=True, slots=True)
class Rect:
    """Axis-aligned floor rectangle, inclusive bounds."""

    min_x: float
    min_z: float
    max_x: float
    max_z: float

    def contains(self, p: Vec2) -> bool:
        return self.min_x <= p.x <= self.max_x and self.min_z <= p.y <= self.max_z


@dataclass(frozen=True, slots=True)
class NavigableRegion:
    """Union of floor rectangles a teleport may land in."""

    rects: tuple[Rect, ...]

    def contains_point(self, p: Vec2) -> bool:
        return any(r.contains(p) for r in self.rects)


@dataclass(frozen=True, slots=True)
class CheckpointTask:
    checkpoint: int
    pickup: Vec3
    dropoffs: tuple[Vec3, ...]
    item_count: int = 3


@dataclass(frozen=True, slots=True)
class TaskState:
    """Progress of the sort task at one checkpoint."""

    checkpoint: int
    items_remaining: int
    carrying: int | None = None

    def __post_init__(self) -> None:
        if not 0 <= self.items_remaining <= 3:
            raise ValueError("items_remaining must be within [0, 3]")


@dataclass(frozen=True, slots=True)
class Scenario:
    level_id: str
    theme: str
    checkpoints: tuple[Vec3, ...]
    paths: tuple[Segment, ...]
    lengths: tuple[float, ...]
    anchors: tuple[InvocationAnchor, ...]
    navigable: NavigableRegion
    playspace: PlaySpace
    tasks: tuple[CheckpointTask, ...]
    arrival_radius: float = 1.0

    def leg_count(self) -> int:
        return len(self.paths)

    def geometry_dict(self) -> dict:
        """Canonical geometry; excludes cosmetic identity (level, theme)."""
        return {
            "checkpoints": [c.as_tuple() for c in self.checkpoints],
            "lengths": list(self.lengths),
            "playspace": {
                "origin": [self.playspace.origin.x, self.playspace.origin.y],
                "half_extents": [self.playspace.half_extents.x, self.playspace.half_extents.y],
            },
            "anchors": [
                {
                    "platform": a.platform_center.as_tuple(),
                    "radius": a.platform_radius,
                    "button": a.button_position.as_tuple(),
                    "destination": a.destination,
                }
                for a in self.anchors
            ],
            "tasks": [
                {
                    "checkpoint": t.checkpoint,
                    "pickup": t.pickup.as_tuple(),
                    "dropoffs": [d.as_tuple() for d in t.dropoffs],
                    "items": t.item_count,
                }
                for t in self.tasks
            ],
            "navigable": [[r.min_x, r.min_z, r.max_x, r.max_z] for r in self.navigable.rects],
            "arrival_radius": self.arrival_radius,
        }

    def scenario_hash(self) -> str:
        blob = json.dumps(self.geometry_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        d = self.geometry_dict()
        d["level"] = self.level_id
        d["theme"] = self.theme
        return d


def _leg_direction(a: Vec3, b: Vec3) -> Vec3:
    return (b - a).normalized()


def _make_anchor(checkpoint: Vec3, direction: Vec3, destination: int) -> InvocationAnchor:
    platform = checkpoint - direction * PLATFORM_SETBACK
    button = platform + direction * 0.3 + Vec3(0.0, 0.9, 0.0)
    return InvocationAnchor(
        platform_center=platform,
        platform_radius=PLATFORM_RADIUS,
        button_position=button,
        destination=destination,
    )


def _make_task(index: int, checkpoint: Vec3) -> CheckpointTask:
    px, pz = _PICKUP_OFFSET
    return CheckpointTask(
        checkpoint=index,
        pickup=checkpoint + Vec3(px, 0.0, pz),
        dropoffs=tuple(checkpoint + Vec3(dx, 0.0, dz) for dx, dz in _DROP_OFFSETS),
    )


def _corridor_rect(a: Vec3, b: Vec3) -> Rect:
    return Rect(
        min(a.x, b.x) - CORRIDOR_HALF_WIDTH,
        min(a.z, b.z) - CORRIDOR_HALF_WIDTH,
        max(a.x, b.x) + CORRIDOR_HALF_WIDTH,
        max(a.z, b.z) + CORRIDOR_HALF_WIDTH,
    )


def _assemble(
    level: str,
    theme: str,
    checkpoints: tuple[Vec3, ...],
    playspace: PlaySpace,
    arrival_radius: float = 1.0,
) -> Scenario:
    if len(checkpoints) < 2:
        raise ValueError("a scenario needs at least two checkpoints")
    if playspace.half_extents.x < MIN_PLAYSPACE_HALF - 1e-12 or (
        playspace.half_extents.y < MIN_PLAYSPACE_HALF - 1e-12
    ):
        raise PlayspaceTooSmall(
            f"playspace {2 * playspace.half_extents.x:.1f} x "
            f"{2 * playspace.half_extents.y:.1f} m is below the "
            f"{2 * MIN_PLAYSPACE_HALF:.0f} x {2 * MIN_PLAYSPACE_HALF:.0f} m minimum"
        )
    paths = tuple(Segment(a, b) for a, b in zip(checkpoints[:-1], checkpoints[1:]))
    lengths = tuple(p.length() for p in paths)
    anchors = tuple(
        _make_anchor(checkpoints[i], p.direction(), i + 1) for i, p in enumerate(paths)
    )
    tasks = tuple(_make_task(i, c) for i, c in enumerate(checkpoints))
    rects = [_corridor_rect(p.start, p.end) for p in paths]
    rects += [
        Rect(
            c.x - CHECKPOINT_HALF_AREA,
            c.z - CHECKPOINT_HALF_AREA,
            c.x + CHECKPOINT_HALF_AREA,
            c.z + CHECKPOINT_HALF_AREA,
        )
        for c in checkpoints
    ]
    return Scenario(
        level_id=level,
        theme=theme,
        checkpoints=checkpoints,
        paths=paths,
        lengths=lengths,
        anchors=anchors,
        navigable=NavigableRegion(tuple(rects)),
        playspace=playspace,
        tasks=tasks,
        arrival_radius=arrival_radius,
    )


def build_default_scenario(level: str, playspace: PlaySpace | None = None) -> Scenario:
    """Canonical seven-checkpoint course; L1 and L2 share the geometry."""
    if level not in ("L1", "L2"):
        raise ValueError(f"unknown level {level!r}; expected 'L1' or 'L2'")
    ps = playspace or PlaySpace()
    checkpoints = [Vec3(0.0, 0.0, 0.0)]
    pos = checkpoints[0]
    for i, length in enumerate(DEFAULT_PATH_LENGTHS):
        direction = Vec3(1.0, 0.0, 0.0) if i % 2 == 0 else Vec3(0.0, 0.0, -1.0)
        pos = pos + direction * length
        checkpoints.append(pos)
    theme = "energy_supply" if level == "L1" else "garbage_collection"
    return _assemble(level, theme, tuple(checkpoints), ps)


def scenario_from_dict(data: dict) -> Scenario:
    """Build a scenario from a parsed config mapping."""
    level = str(data.get("level", "L1"))
    ps_data = data.get("playspace", {})
    origin = ps_data.get("origin", [0.0, 0.0])
    half = ps_data.get("half_extents", [2.0, 2.0])
    playspace = PlaySpace(Vec2(*map(float, origin)), Vec2(*map(float, half)))
    cps = data.get("checkpoints")
    if cps:
        # entries are [x, z] floor pairs or full [x, y, z] triples
        checkpoints = tuple(
            Vec3(float(c[0]), float(c[1]), float(c[2]))
            if len(c) == 3
            else Vec3(float(c[0]), 0.0, float(c[1]))
            for c in cps
        )
        theme = str(data.get("theme", "custom"))
        return _assemble(level, theme, checkpoints, playspace,
                         arrival_radius=float(data.get("arrival_radius", 1.0)))
    return build_default_scenario(level, playspace)


def scenario_from_toml(path: str) -> tuple[Scenario, dict]:
    """Load a scenario file; returns the scenario and any run-level overrides."""
    try:
        import tomllib  # Python >= 3.11
    except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
        import tomli as tomllib
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    scenario_data = data.get("scenario", {})
    if "checkpoints" in data:
        scenario_data = dict(scenario_data)
        scenario_data["checkpoints"] = [
            [row["x"], row["z"]] for row in data["checkpoints"]
        ]
    if "playspace" in data:
        scenario_data["playspace"] = data["playspace"]
    overrides = {k: data[k] for k in ("gain", "agent", "run") if k in data}
    return scenario_from_dict(scenario_data), overrides


# --- agent profile -------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class AgentProfile:
    """Gait and policy parameters of a scripted walker."""

    walk_speed: float = 1.0  # m/s
    step_cadence: float = 1.8  # Hz
    bob_amplitude_vertical: float = 0.025
    bob_amplitude_lateral: float = 0.015
    task_time_per_item: float = 15.0
    technique: Technique = Technique.TUNNEL
    teleport_threshold: float = 0.0  # walk below, teleport above
    eye_height: float = 1.7
    jitter: float = 0.0

    def __post_init__(self) -> None:
        if self.walk_speed <= 0:
            raise ValueError("walk speed must be positive")
        if self.bob_amplitude_vertical < 0 or self.bob_amplitude_lateral < 0:
            raise ValueError("bob amplitudes must be >= 0")
        if self.task_time_per_item < 0 or self.teleport_threshold < 0:
            raise ValueError("times and thresholds must be >= 0")

    def to_dict(self) -> dict:
        return {
            "walk_speed": self.walk_speed,
            "step_cadence": self.step_cadence,
            "bob_amplitude_vertical": self.bob_amplitude_vertical,
            "bob_amplitude_lateral": self.bob_amplitude_lateral,
            "task_time_per_item": self.task_time_per_item,
            "technique": self.technique.value,
            "teleport_threshold": self.teleport_threshold,
            "eye_height": self.eye_height,
            "jitter": self.jitter,
        }

    @staticmethod
    def from_dict(data: dict) -> AgentProfile:
        kwargs = dict(data)
        if "technique" in kwargs:
            kwargs["technique"] = Technique(kwargs["technique"])
        return AgentProfile(**kwargs)


# --- intents ---------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class WalkToPoint:
    target: Vec3


@dataclass(frozen=True, slots=True)
class WalkAlong:
    direction: Vec3


@dataclass(frozen=True, slots=True)
class Press:
    leg: int


@dataclass(frozen=True, slots=True)
class TeleportTo:
    target: Vec3


@dataclass(frozen=True, slots=True)
class HandleItem:
    """Stand still working on the current pick or place."""

    action: str  # "pick" | "place"
    item: int


@dataclass(frozen=True, slots=True)
class Wait:
    pass


@dataclass(frozen=True, slots=True)
class Done:
    pass


Intent = WalkToPoint | WalkAlong | Press | TeleportTo | HandleItem | Wait | Done


@dataclass(frozen=True, slots=True)
class AgentContext:
    """Engine-visible state the agent decides from."""

    sim_time: float
    rig_world: Vec3
    parented: bool
    phase: TunnelPhase
    teleport_ready: bool


class _Mode(enum.Enum):
    TASK = "task"
    TO_PLATFORM = "to_platform"
    PRESS = "press"
    WAIT_OPEN = "wait_open"
    THROUGH = "through"
    TRAVEL = "travel"  # teleport legs
    DONE = "done"


class _TaskSub(enum.Enum):
    TO_PICKUP = "to_pickup"
    PICKING = "picking"
    TO_DROP = "to_drop"
    PLACING = "placing"


_ARRIVE_EPS = 1e-9


class ScriptedAgent:
    """Deterministic walker that completes every checkpoint task in order.

    Emits one intent per tick; task handling timers are counted in whole
    ticks so trajectories are exactly reproducible at a fixed tick rate.
    """

    def __init__(self, scenario: Scenario, profile: AgentProfile, tick_rate: int):
        self.scenario = scenario
        self.profile = profile
        self.tick_rate = tick_rate
        self.mode = _Mode.TASK
        self.checkpoint = 0
        self.active_leg = -1
        self.task_sub = _TaskSub.TO_PICKUP
        self.item = 0
        self.handle_ticks_left = self._handle_ticks()
        self.task = TaskState(checkpoint=0, items_remaining=3)
        # Signals for the engine, drained once per tick.
        self.signals: list[tuple] = []

    def _handle_ticks(self) -> int:
        return max(1, round(self.profile.task_time_per_item / 2.0 * self.tick_rate))

    def _arrived(self, ctx: AgentContext, target: Vec3) -> bool:
        return (ctx.rig_world - target).horizontal_norm() <= _ARRIVE_EPS

    def _move_intent(self, ctx: AgentContext, target: Vec3) -> Intent:
        """Walk or, for teleport users beyond their threshold, jump."""
        dist = (ctx.rig_world - target).horizontal_norm()
        if (
            self.profile.technique is Technique.TELEPORT
            and dist > self.profile.teleport_threshold
            and ctx.teleport_ready
        ):
            return TeleportTo(target)
        return WalkToPoint(target)

    def on_leg_complete(self) -> None:
        """Engine callback: the rig reached the destination checkpoint."""
        self.checkpoint = self.active_leg + 1
        self.task = TaskState(checkpoint=self.checkpoint, items_remaining=3)
        if self.mode is _Mode.TRAVEL:
            self._begin_task()

    def step(self, ctx: AgentContext) -> Intent:
        mode = self.mode
        if mode is _Mode.DONE:
            return Done()

        if mode is _Mode.TASK:
            return self._step_task(ctx)

        if mode is _Mode.TO_PLATFORM:
            anchor = self.scenario.anchors[self.active_leg]
            if self._arrived(ctx, anchor.platform_center):
                self.mode = _Mode.PRESS
                return Wait()
            return WalkToPoint(anchor.platform_center)

        if mode is _Mode.PRESS:
            if ctx.phase is TunnelPhase.IDLE:
                self.mode = _Mode.WAIT_OPEN
                return Press(self.active_leg)
            return Wait()  # previous tunnel still tearing down

        if mode is _Mode.WAIT_OPEN:
            if ctx.phase is TunnelPhase.OPEN:
                self.mode = _Mode.THROUGH
            return Wait()

        if mode is _Mode.THROUGH:
            path = self.scenario.paths[self.active_leg]
            axis = path.direction()
            beyond = (ctx.rig_world - path.end).dot(axis)
            arrived = self.checkpoint == self.active_leg + 1
            if not ctx.parented and arrived and beyond >= EGRESS_CLEARANCE:
                self._begin_task()
                return self._step_task(ctx)
            return WalkAlong(axis)

        if mode is _Mode.TRAVEL:
            goal = self.scenario.checkpoints[self.active_leg + 1]
            return self._move_intent(ctx, goal)

        raise AssertionError(f"unhandled mode {mode}")  # pragma: no cover

    def _begin_task(self) -> None:
        self.mode = _Mode.TASK
        self.task_sub = _TaskSub.TO_PICKUP
        self.item = 0
        self.handle_ticks_left = self._handle_ticks()

    def _step_task(self, ctx: AgentContext) -> Intent:
        task = self.scenario.tasks[self.checkpoint]
        if self.task_sub is _TaskSub.TO_PICKUP:
            if self._arrived(ctx, task.pickup):
                self.task_sub = _TaskSub.PICKING
                self.handle_ticks_left = self._handle_ticks()
            else:
                return self._move_intent(ctx, task.pickup)
        if self.task_sub is _TaskSub.PICKING:
            self.handle_ticks_left -= 1
            if self.handle_ticks_left > 0:
                return HandleItem("pick", self.item)
            self.task = replace(self.task, carrying=self.item)
            self.signals.append(("task_action", "pick", self.item))
            self.task_sub = _TaskSub.TO_DROP
            return HandleItem("pick", self.item)
        if self.task_sub is _TaskSub.TO_DROP:
            target = task.dropoffs[self.item]
            if self._arrived(ctx, target):
                self.task_sub = _TaskSub.PLACING
                self.handle_ticks_left = self._handle_ticks()
            else:
                return self._move_intent(ctx, target)
        if self.task_sub is _TaskSub.PLACING:
            self.handle_ticks_left -= 1
            if self.handle_ticks_left > 0:
                return HandleItem("place", self.item)
            self.signals.append(("task_action", "place", self.item))
            self.task = replace(
                self.task, items_remaining=self.task.items_remaining - 1, carrying=None
            )
            self.item += 1
            if self.item >= task.item_count:
                return self._finish_checkpoint()
            self.task_sub = _TaskSub.TO_PICKUP
            return HandleItem("place", self.item - 1)
        raise AssertionError(f"unhandled task sub-state {self.task_sub}")  # pragma: no cover

    def _finish_checkpoint(self) -> Intent:
        self.signals.append(("checkpoint_complete", self.checkpoint))
        if self.checkpoint >= len(self.scenario.paths):
            self.mode = _Mode.DONE
            return Done()
        self.active_leg = self.checkpoint
        self.signals.append(("leg_start", self.active_leg))
        if self.profile.technique is Technique.TUNNEL:
            self.mode = _Mode.TO_PLATFORM
        else:
            self.mode = _Mode.TRAVEL
        return Wait()


def agent_step(agent: ScriptedAgent, ctx: AgentContext, dt: float) -> Intent:
    """One decision step; dt is implicit in the agent's tick rate."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return agent.step(ctx)
