"""Runtime technique layer: tunnel animation machine, invocation, teleport.

The tunnel lifecycle is a strict cycle: Idle, RisingHalf, Extending,
RisingFull, DoorsOpening, Open, Traversing, DoorsClosing, Retracting, and back
to Idle. Timed phases advance on tick(); Open waits for the rig to cross the
entry portal, Traversing waits for the rig to leave the cabin entirely.
Every event is defined in every phase (invalid ones are ignored), so the
machine never throws and never skips a phase.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

from .geometry import PlaySpace, Pose, Segment, Vec2, Vec3
from .tunnel import GainStrategy, TunnelParams, TunnelSpec, tunnel_build

__all__ = [
    "NotOnPlatform",
    "TunnelAlreadyActive",
    "CooldownActive",
    "TunnelPhase",
    "PhaseDurations",
    "EffectKind",
    "Effect",
    "TunnelMachine",
    "InvocationAnchor",
    "invoke_tunnel",
    "AimModel",
    "TeleportConfig",
    "AimResult",
    "teleport_aim",
    "Teleporter",
    "PHASE_ORDER",
    "ALLOWED_TRANSITIONS",
]


class NotOnPlatform(RuntimeError):
    """Invocation requires standing on the platform."""


class TunnelAlreadyActive(RuntimeError):
    """Only one tunnel lifecycle may run at a time."""


class CooldownActive(RuntimeError):
    """Teleport re-triggered before its cooldown elapsed."""


class TunnelPhase(enum.Enum):
    IDLE = "idle"
    RISING_HALF = "rising_half"
    EXTENDING = "extending"
    RISING_FULL = "rising_full"
    DOORS_OPENING = "doors_opening"
    OPEN = "open"
    TRAVERSING = "traversing"
    DOORS_CLOSING = "doors_closing"
    RETRACTING = "retracting"


PHASE_ORDER = [
    TunnelPhase.IDLE,
    TunnelPhase.RISING_HALF,
    TunnelPhase.EXTENDING,
    TunnelPhase.RISING_FULL,
    TunnelPhase.DOORS_OPENING,
    TunnelPhase.OPEN,
    TunnelPhase.TRAVERSING,
    TunnelPhase.DOORS_CLOSING,
    TunnelPhase.RETRACTING,
]

ALLOWED_TRANSITIONS = {
    (PHASE_ORDER[i], PHASE_ORDER[(i + 1) % len(PHASE_ORDER)]) for i in range(len(PHASE_ORDER))
}


@dataclass(frozen=True, slots=True)
class PhaseDurations:
    """Seconds per timed phase; the waiting phases (Open, Traversing) have none.

    ``schedule`` optionally scales all durations per invocation (repeat
    invocations can run faster); the last entry applies to later invocations.
    """

    rising_half: float = 0.5
    extending: float = 1.0
    rising_full: float = 0.5
    doors_opening: float = 0.5
    doors_closing: float = 0.5
    retracting: float = 2.0
    schedule: tuple[float, ...] = (1.0,)

    def __post_init__(self) -> None:
        for name in ("rising_half", "extending", "rising_full", "doors_opening",
                     "doors_closing", "retracting"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} duration must be >= 0")
        if not self.schedule or any(m <= 0 for m in self.schedule):
            raise ValueError("schedule multipliers must be positive")

    def multiplier(self, invocation_index: int) -> float:
        return self.schedule[min(invocation_index, len(self.schedule) - 1)]

    def for_phase(self, phase: TunnelPhase, invocation_index: int) -> float | None:
        base = {
            TunnelPhase.RISING_HALF: self.rising_half,
            TunnelPhase.EXTENDING: self.extending,
            TunnelPhase.RISING_FULL: self.rising_full,
            TunnelPhase.DOORS_OPENING: self.doors_opening,
            TunnelPhase.DOORS_CLOSING: self.doors_closing,
            TunnelPhase.RETRACTING: self.retracting,
        }.get(phase)
        if base is None:
            return None
        return base * self.multiplier(invocation_index)

    def animation_total(self, invocation_index: int = 0) -> float:
        """Press-to-Open time."""
        return (self.rising_half + self.extending + self.rising_full + self.doors_opening) \
            * self.multiplier(invocation_index)


class EffectKind(enum.Enum):
    PHASE_CHANGED = "phase_changed"
    PARENT_RIG = "parent_rig"
    UNPARENT_RIG = "unparent_rig"
    START_TEARDOWN = "start_teardown"


@dataclass(frozen=True, slots=True)
class Effect:
    kind: EffectKind
    previous: TunnelPhase | None = None
    phase: TunnelPhase | None = None
    abort: bool = False


class TunnelMachine:
    """Total state machine for one tunnel's animation lifecycle.

    All event methods return the effects they produced; events that are not
    legal in the current phase produce no effects and change nothing.
    """

    def __init__(self, durations: PhaseDurations | None = None):
        self.durations = durations or PhaseDurations()
        self.phase = TunnelPhase.IDLE
        self.phase_elapsed = 0.0
        self.invocation_count = 0

    def _enter(self, phase: TunnelPhase, effects: list[Effect]) -> None:
        effects.append(Effect(EffectKind.PHASE_CHANGED, previous=self.phase, phase=phase))
        self.phase = phase
        self.phase_elapsed = 0.0

    def press(self) -> list[Effect]:
        if self.phase is not TunnelPhase.IDLE:
            return []
        effects: list[Effect] = []
        self._enter(TunnelPhase.RISING_HALF, effects)
        self.invocation_count += 1
        return effects

    def tick(self, dt: float) -> list[Effect]:
        """Advance timers; may complete several timed phases in one call."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        effects: list[Effect] = []
        remaining = dt
        while remaining > 0:
            duration = self.durations.for_phase(self.phase, self.invocation_count - 1)
            if duration is None:
                break  # waiting phase: time passes without transition
            left = duration - self.phase_elapsed
            if remaining < left - 1e-12:
                self.phase_elapsed += remaining
                break
            remaining -= max(left, 0.0)
            nxt = PHASE_ORDER[(PHASE_ORDER.index(self.phase) + 1) % len(PHASE_ORDER)]
            self._enter(nxt, effects)
            if nxt is TunnelPhase.IDLE:
                break
        return effects

    def entry_crossed(self) -> list[Effect]:
        """Rig crossed the entry portal plane; only meaningful while Open."""
        if self.phase is not TunnelPhase.OPEN:
            return []
        effects: list[Effect] = []
        self._enter(TunnelPhase.TRAVERSING, effects)
        effects.append(Effect(EffectKind.PARENT_RIG))
        return effects

    def exit_crossed(self, abort: bool = False) -> list[Effect]:
        """Rig crossed the exit (or, aborting, the entry) portal plane outward."""
        if self.phase is not TunnelPhase.TRAVERSING:
            return []
        return [Effect(EffectKind.UNPARENT_RIG, abort=abort)]

    def cabin_cleared(self) -> list[Effect]:
        """Rig is entirely outside the cabin volume; teardown may begin."""
        if self.phase is not TunnelPhase.TRAVERSING:
            return []
        effects: list[Effect] = [Effect(EffectKind.START_TEARDOWN)]
        self._enter(TunnelPhase.DOORS_CLOSING, effects)
        return effects


# --- invocation platform ------------------------------------------------------


@dataclass(frozen=True, slots=True)
class InvocationAnchor:
    """Elevator-style call point: stand on the platform, press the button."""

    platform_center: Vec3
    platform_radius: float
    button_position: Vec3
    destination: int
    reach: float = 1.0

    def __post_init__(self) -> None:
        if self.platform_radius <= 0:
            raise ValueError("platform radius must be positive")
        if (self.button_position - self.platform_center).norm() > self.reach:
            raise ValueError("button is out of reach from the platform")


def invoke_tunnel(
    anchor: InvocationAnchor,
    user_world: Pose,
    machine: TunnelMachine,
    path: Segment,
    strategy: GainStrategy,
    params: TunnelParams,
    playspace: PlaySpace,
    entry_physical: Vec3,
) -> tuple[TunnelSpec, list[Effect]]:
    """Build the tunnel for the anchor's destination and start the animation."""
    if machine.phase is not TunnelPhase.IDLE:
        raise TunnelAlreadyActive(f"tunnel machine is {machine.phase.value}")
    offset = user_world.position - anchor.platform_center
    if math.hypot(offset.x, offset.z) > anchor.platform_radius:
        raise NotOnPlatform(
            f"user is {math.hypot(offset.x, offset.z):.2f} m from the platform center"
        )
    spec = tunnel_build(path, strategy, params, playspace, entry_physical)
    return spec, machine.press()


# --- point-and-teleport baseline -----------------------------------------------


class AimModel(enum.Enum):
    STRAIGHT_RAY = "straight_ray"
    PARABOLIC = "parabolic"


@dataclass(frozen=True, slots=True)
class TeleportConfig:
    max_range: float = 12.0
    aim_model: AimModel = AimModel.STRAIGHT_RAY
    cooldown: float = 0.0
    clamp_to_range: bool = False
    launch_speed: float = 10.0  # parabolic arc only
    gravity: float = 9.81

    def __post_init__(self) -> None:
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")
        if self.cooldown < 0:
            raise ValueError("cooldown must be >= 0")


@dataclass(frozen=True, slots=True)
class AimResult:
    valid: bool
    target: Vec3 | None = None
    reason: str = ""

    @staticmethod
    def invalid(reason: str) -> AimResult:
        return AimResult(False, None, reason)


def teleport_aim(origin: Pose, direction: Vec3, cfg: TeleportConfig, navigable) -> AimResult:
    """Resolve an aim ray to a ground target, or Invalid.

    ``navigable`` is anything with a ``contains_point(Vec2) -> bool`` method.
    Straight rays intersect the floor plane; parabolic aims follow a ballistic
    arc from the origin with the configured launch speed.
    """
    d = direction.normalized()
    if cfg.aim_model is AimModel.STRAIGHT_RAY:
        if d.y >= -1e-12:
            return AimResult.invalid("aim ray never reaches the ground")
        t = -origin.position.y / d.y
        hit = origin.position + d * t
    else:
        v = d * cfg.launch_speed
        # Solve y0 + vy t - g t^2 / 2 == 0 for the forward-time root.
        disc = v.y * v.y + 2.0 * cfg.gravity * origin.position.y
        if disc < 0:
            return AimResult.invalid("arc never reaches the ground")
        t = (v.y + math.sqrt(disc)) / cfg.gravity
        hit = Vec3(origin.position.x + v.x * t, 0.0, origin.position.z + v.z * t)
    hit = Vec3(hit.x, 0.0, hit.z)

    span = hit - Vec3(origin.position.x, 0.0, origin.position.z)
    dist = span.norm()
    if dist > cfg.max_range:
        if not cfg.clamp_to_range:
            return AimResult.invalid(f"target {dist:.2f} m away exceeds range {cfg.max_range} m")
        hit = Vec3(origin.position.x, 0.0, origin.position.z) + span * (cfg.max_range / dist)

    if not navigable.contains_point(Vec2(hit.x, hit.z)):
        return AimResult.invalid("target is outside the navigable region")
    return AimResult(True, hit)


class Teleporter:
    """Executes instant relocations, enforcing the cooldown."""

    def __init__(self, cfg: TeleportConfig):
        self.cfg = cfg
        self._last_exec: float | None = None

    def execute(self, rig: Pose, target: Vec3, now: float) -> Pose:
        """Relocate the rig to the target floor point; orientation is kept."""
        if (
            self._last_exec is not None
            and self.cfg.cooldown > 0
            and now - self._last_exec < self.cfg.cooldown
        ):
            raise CooldownActive(
                f"cooldown: {self.cfg.cooldown - (now - self._last_exec):.2f} s remaining"
            )
        self._last_exec = now
        return replace(rig, position=Vec3(target.x, rig.position.y, target.z))
