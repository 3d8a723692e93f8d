"""Compressed-cabin tunnel construction and traversal kinematics.

A tunnel is a hull spanning the full virtual distance between two anchor
points, with an enclosed cabin inside whose physical length is the virtual
distance divided by the translational gain. While the rig is parented to the
cabin, its forward steps along the tunnel axis are scaled by the gain; the
cabin itself advances by (gain - 1) times the walked offset so that cabin and
walker reach the far end together. Off-axis motion is never scaled.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import UP, PlaySpace, Pose, Quat, Segment, Transform, Vec2, Vec3

__all__ = [
    "DegeneratePath",
    "GainBelowOne",
    "CabinDoesNotFit",
    "NotInCabin",
    "HeadOutsideCabin",
    "FixedGain",
    "FixedCabinLength",
    "AdaptiveToPlayspace",
    "GainStrategy",
    "WindowLayout",
    "PortalSide",
    "PortalPair",
    "TunnelParams",
    "TunnelSpec",
    "RigParent",
    "TraversalState",
    "Surface",
    "SmoothedForwardDriver",
    "tunnel_build",
    "project_step",
    "advance_traversal",
    "traversal_pose",
    "portal_view_transform",
    "window_mask",
    "classify_rays",
]


class DegeneratePath(ValueError):
    """Tunnel path is unusable: zero length or anchors at differing heights."""


class GainBelowOne(ValueError):
    """Requested configuration would need a cabin longer than the virtual path."""


class CabinDoesNotFit(ValueError):
    """Physical cabin footprint exceeds the available playspace."""


class NotInCabin(RuntimeError):
    """Traversal kinematics require the rig to be parented to the cabin."""


class HeadOutsideCabin(ValueError):
    """View classification requires the head inside the cabin volume."""


# --- gain strategies -------------------------------------------------------


@dataclass(frozen=True, slots=True)
class FixedGain:
    gain: float


@dataclass(frozen=True, slots=True)
class FixedCabinLength:
    cabin_length: float


@dataclass(frozen=True, slots=True)
class AdaptiveToPlayspace:
    """Use the longest cabin that fits ahead of the entry point, capped by the path."""

    fit_margin: float = 0.0


GainStrategy = FixedGain | FixedCabinLength | AdaptiveToPlayspace


# --- window layout ---------------------------------------------------------


@dataclass(frozen=True, slots=True)
class WindowLayout:
    """Horizontal glass stripes on the cabin side walls.

    Stripes run the full cabin length. ``sill_height`` is the bottom of the
    lowest stripe above the floor; stripes of ``stripe_height`` repeat upward
    separated by ``stripe_spacing``.
    """

    stripe_count: int = 3
    stripe_height: float = 0.25
    stripe_spacing: float = 0.20
    sill_height: float = 1.0

    def __post_init__(self) -> None:
        if self.stripe_count < 0:
            raise ValueError("stripe_count must be >= 0")
        if self.stripe_height < 0 or self.stripe_spacing < 0 or self.sill_height < 0:
            raise ValueError("window dimensions must be >= 0")

    def total_height(self) -> float:
        if self.stripe_count == 0:
            return 0.0
        return (
            self.sill_height
            + self.stripe_count * self.stripe_height
            + (self.stripe_count - 1) * self.stripe_spacing
        )

    def coverage_ratio(self, wall_height: float) -> float:
        """Fraction of wall area that is glass; stripes span the full length."""
        if wall_height <= 0:
            raise ValueError("wall height must be positive")
        return (self.stripe_count * self.stripe_height) / wall_height

    def bands(self) -> list[tuple[float, float]]:
        """(bottom, top) height intervals of the glass stripes."""
        out = []
        y = self.sill_height
        for _ in range(self.stripe_count):
            out.append((y, y + self.stripe_height))
            y += self.stripe_height + self.stripe_spacing
        return out

    def validate_against(self, wall_height: float) -> None:
        if self.total_height() > wall_height + 1e-12:
            raise ValueError("window stripes do not fit within the wall height")

    @staticmethod
    def for_coverage(ratio: float, wall_height: float, stripe_count: int = 3) -> WindowLayout:
        """Layout whose glass area is the given fraction of the wall.

        Stripes are spread evenly; ratio 0 yields a solid wall, ratio 1 a
        fully glazed one.
        """
        if not 0.0 <= ratio <= 1.0:
            raise ValueError("coverage ratio must be in [0, 1]")
        if ratio == 0.0:
            return WindowLayout(stripe_count=0, stripe_height=0.0, stripe_spacing=0.0, sill_height=0.0)
        n = max(1, stripe_count)
        stripe_h = ratio * wall_height / n
        gap = (wall_height - n * stripe_h) / (n + 1)
        return WindowLayout(
            stripe_count=n, stripe_height=stripe_h, stripe_spacing=gap, sill_height=gap
        )


# --- portals ----------------------------------------------------------------


class PortalSide(enum.Enum):
    ENTRY = "entry"
    EXIT = "exit"


@dataclass(frozen=True, slots=True)
class PortalPair:
    """Cabin entry/exit faces and the hull ends they display.

    Face poses are cabin-local (x along the axis from the cabin entrance);
    targets are world poses of the hull's near and far ends.
    """

    entry_face_local: Pose
    exit_face_local: Pose
    entry_target: Pose
    exit_target: Pose
    width: float
    height: float


@dataclass(frozen=True, slots=True)
class TunnelParams:
    """Construction parameters that are not derived from the path."""

    width: float = 1.5
    height: float = 2.3
    windows: WindowLayout = field(default_factory=WindowLayout)
    fit_margin: float = 0.0

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError("cabin width and height must be positive")
        if self.fit_margin < 0:
            raise ValueError("fit margin must be >= 0")
        self.windows.validate_against(self.height)


@dataclass(frozen=True, slots=True)
class TunnelSpec:
    """Immutable construction of one tunnel."""

    path: Segment
    gain: float
    hull_length: float
    cabin_length: float
    width: float
    height: float
    axis: Vec3
    windows: WindowLayout
    portals: PortalPair

    def __post_init__(self) -> None:
        if self.gain < 1.0:
            raise GainBelowOne(f"gain must be >= 1, got {self.gain}")
        if abs(self.cabin_length * self.gain - self.hull_length) >= 1e-9:
            raise ValueError("cabin_length * gain must equal hull_length")
        if abs(self.axis.norm() - 1.0) >= 1e-12:
            raise ValueError("axis must be unit length")

    @property
    def up(self) -> Vec3:
        return UP

    @property
    def side(self) -> Vec3:
        # Horizontal axis guaranteed at construction, so this is unit length.
        return self.axis.cross(UP)

    def cabin_origin(self, cabin_offset: float) -> Vec3:
        """World position of the cabin entrance floor center."""
        return self.path.start + self.axis * cabin_offset

    def basis_matrix(self) -> np.ndarray:
        """Rows are the cabin frame axes (axis, up, side)."""
        return np.array(
            [self.axis.as_tuple(), self.up.as_tuple(), self.side.as_tuple()], dtype=float
        )

    @staticmethod
    def build(path: Segment, gain: float, params: TunnelParams) -> TunnelSpec:
        """Assemble a spec from a resolved gain; no playspace fitting here."""
        if abs(path.start.y - path.end.y) > 1e-9:
            raise DegeneratePath("tunnel anchors must share the same height")
        if gain < 1.0:
            raise GainBelowOne(f"gain must be >= 1, got {gain}")
        d = path.length()
        cabin_length = d / gain
        axis = path.direction()
        yaw_rot = _axis_orientation(axis)
        half_h = params.height / 2.0
        portals = PortalPair(
            entry_face_local=Pose(Vec3(0.0, half_h, 0.0), Quat.identity()),
            exit_face_local=Pose(Vec3(cabin_length, half_h, 0.0), Quat.identity()),
            entry_target=Pose(path.start + Vec3(0.0, half_h, 0.0), yaw_rot),
            exit_target=Pose(path.end + Vec3(0.0, half_h, 0.0), yaw_rot),
            width=params.width,
            height=params.height,
        )
        return TunnelSpec(
            path=path,
            gain=gain,
            hull_length=d,
            cabin_length=cabin_length,
            width=params.width,
            height=params.height,
            axis=axis,
            windows=params.windows,
            portals=portals,
        )


def _axis_orientation(axis: Vec3) -> Quat:
    return Quat.from_yaw(math.atan2(-axis.z, axis.x))


# --- traversal state ---------------------------------------------------------


class RigParent(enum.Enum):
    WORLD = "world"
    CABIN = "cabin"


@dataclass(frozen=True, slots=True)
class TraversalState:
    """Runtime state of one cabin crossing.

    ``x`` is the rig's walked offset along the axis since entering the cabin,
    clamped to [0, cabin_length]. ``lateral`` holds the unscaled (up, side)
    offset of the rig within the cabin. The cabin's own displacement along the
    hull is derived: (gain - 1) * x.
    """

    x: float = 0.0
    lateral: Vec2 = Vec2(0.0, 0.0)
    rig_parent: RigParent = RigParent.WORLD

    def cabin_origin_offset(self, spec: TunnelSpec) -> float:
        return (spec.gain - 1.0) * self.x


def project_step(step: Vec3, axis: Vec3) -> tuple[float, Vec2]:
    """Split a step into its along-axis length and (up, side) lateral parts."""
    if abs(axis.norm() - 1.0) >= 1e-12:
        raise ValueError("axis must be unit length")
    forward = step.dot(axis)
    side = axis.cross(UP)
    return forward, Vec2(step.dot(UP), step.dot(side))


def traversal_pose(spec: TunnelSpec, state: TraversalState) -> Pose:
    """Rig world pose implied by a traversal state."""
    pos = (
        spec.path.start
        + spec.axis * (spec.gain * state.x)
        + UP * state.lateral.x
        + spec.side * state.lateral.y
    )
    return Pose(pos, _axis_orientation(spec.axis))


def advance_traversal(
    state: TraversalState, spec: TunnelSpec, step: Vec3
) -> tuple[TraversalState, Pose]:
    """Apply one physical step to a parented rig.

    Forward motion is clamped to the cabin interior; lateral motion maps 1:1.
    Returns the new state and the rig's world pose.
    """
    if state.rig_parent is not RigParent.CABIN:
        raise NotInCabin("rig is not parented to the cabin")
    forward, lat = project_step(step, spec.axis)
    new_x = min(max(state.x + forward, 0.0), spec.cabin_length)
    new_state = replace(state, x=new_x, lateral=state.lateral + lat)
    return new_state, traversal_pose(spec, new_state)


# --- tunnel construction -----------------------------------------------------


class SmoothedForwardDriver:
    """Optional step preprocessor: drive the gain from filtered forward motion.

    The default kinematics amplify the head's raw forward displacement; a head
    leaned back and forth therefore sweeps the world at the full gain. This
    driver low-pass filters the along-axis step component (a stand-in for
    center-of-mass motion) before it reaches advance_traversal, so oscillatory
    leans are attenuated while sustained walking converges to the true rate
    within the filter's time constant. Off-axis motion passes through 1:1.
    """

    def __init__(self, axis: Vec3, time_constant: float = 0.25):
        if time_constant <= 0:
            raise ValueError("time constant must be positive")
        self.axis = axis
        self.time_constant = time_constant
        self._filtered_rate = 0.0

    def filter_step(self, step: Vec3, dt: float) -> Vec3:
        if dt <= 0:
            raise ValueError("dt must be positive")
        forward = step.dot(self.axis)
        alpha = dt / (self.time_constant + dt)
        self._filtered_rate += alpha * (forward / dt - self._filtered_rate)
        side = self.axis.cross(UP)
        return (
            self.axis * (self._filtered_rate * dt)
            + UP * step.dot(UP)
            + side * step.dot(side)
        )


def tunnel_build(
    path: Segment,
    strategy: GainStrategy,
    params: TunnelParams,
    playspace: PlaySpace,
    entry_physical: Vec3,
) -> TunnelSpec:
    """Resolve the gain, verify the cabin fits the room, and build the spec.

    ``entry_physical`` is the tracked-space floor point where the cabin
    entrance materializes (the walker's position for free-standing tunnels).
    The cabin footprint extends from there along the tunnel axis and must lie
    inside the playspace.
    """
    if abs(path.start.y - path.end.y) > 1e-9:
        raise DegeneratePath("tunnel anchors must share the same height")
    d = path.length()
    axis = path.direction()

    if isinstance(strategy, FixedGain):
        if strategy.gain < 1.0:
            raise GainBelowOne(f"gain must be >= 1, got {strategy.gain}")
        gain = strategy.gain
        cabin_length = d / gain
    elif isinstance(strategy, FixedCabinLength):
        if strategy.cabin_length <= 0.0:
            raise CabinDoesNotFit("cabin length must be positive")
        if strategy.cabin_length > d:
            raise GainBelowOne(
                f"cabin of {strategy.cabin_length} m exceeds the {d} m virtual path"
            )
        cabin_length = strategy.cabin_length
        gain = d / cabin_length
    elif isinstance(strategy, AdaptiveToPlayspace):
        usable = _max_cabin_length(playspace, entry_physical, axis, params.width, strategy.fit_margin)
        if usable <= 0.0:
            raise CabinDoesNotFit("no room ahead of the entry point for any cabin")
        cabin_length = min(usable, d)
        gain = d / cabin_length
    else:  # pragma: no cover - exhaustive over GainStrategy
        raise TypeError(f"unknown gain strategy: {strategy!r}")

    _check_footprint(playspace, entry_physical, axis, cabin_length, params.width, params.fit_margin)
    return TunnelSpec.build(path, gain, params)


def _footprint_corners(entry: Vec3, axis: Vec3, length: float, width: float) -> list[Vec2]:
    side = axis.cross(UP)
    half_w = width / 2.0
    exit_ = entry + axis * length
    return [
        (entry + side * half_w).xz(),
        (entry - side * half_w).xz(),
        (exit_ + side * half_w).xz(),
        (exit_ - side * half_w).xz(),
    ]


def _check_footprint(
    playspace: PlaySpace,
    entry: Vec3,
    axis: Vec3,
    length: float,
    width: float,
    fit_margin: float,
) -> None:
    worst = min(playspace.margin(c) for c in _footprint_corners(entry, axis, length, width))
    if worst < fit_margin:
        raise CabinDoesNotFit(
            f"cabin footprint of {length:.3f} m x {width:.3f} m leaves "
            f"{worst:.3f} m margin (need >= {fit_margin:.3f} m)"
        )


def _max_cabin_length(
    playspace: PlaySpace, entry: Vec3, axis: Vec3, width: float, fit_margin: float
) -> float:
    """Longest cabin that keeps its footprint inside the playspace."""
    side = axis.cross(UP)
    half_w = width / 2.0
    best = math.inf
    for sign in (1.0, -1.0):
        corner = (entry + side * (sign * half_w)).xz()
        if playspace.margin(corner) < fit_margin:
            return 0.0
        best = min(best, _exit_distance(playspace, corner, Vec2(axis.x, axis.z), fit_margin))
    return best


def _exit_distance(playspace: PlaySpace, start: Vec2, direction: Vec2, margin: float) -> float:
    """Distance along ``direction`` until the margin-shrunk rectangle is left."""
    lo_x = playspace.origin.x - playspace.half_extents.x + margin
    hi_x = playspace.origin.x + playspace.half_extents.x - margin
    lo_y = playspace.origin.y - playspace.half_extents.y + margin
    hi_y = playspace.origin.y + playspace.half_extents.y - margin
    best = math.inf
    for pos, d, lo, hi in ((start.x, direction.x, lo_x, hi_x), (start.y, direction.y, lo_y, hi_y)):
        if d > 1e-12:
            best = min(best, (hi - pos) / d)
        elif d < -1e-12:
            best = min(best, (lo - pos) / d)
    return max(best, 0.0)


# --- portal transforms -------------------------------------------------------


def portal_view_transform(spec: TunnelSpec, state: TraversalState, which: PortalSide) -> Transform:
    """Rigid map from viewpoints at a portal surface to viewpoints at its target.

    A ray sampled through the portal hits the same world point before and
    after applying the transform, which is what makes the cabin faces read as
    openings onto the hull ends.
    """
    cabin_pose = Pose(
        spec.cabin_origin(state.cabin_origin_offset(spec)), _axis_orientation(spec.axis)
    )
    if which is PortalSide.ENTRY:
        local = spec.portals.entry_face_local
        target = spec.portals.entry_target
    else:
        local = spec.portals.exit_face_local
        target = spec.portals.exit_target
    from .geometry import compose as pose_compose

    surface_world = pose_compose(cabin_pose, local)
    return Transform.between(surface_world, target)


# --- view-ray classification -------------------------------------------------


class Surface(enum.Enum):
    WALL = "wall"
    WINDOW = "window"
    PORTAL_ENTRY = "portal_entry"
    PORTAL_EXIT = "portal_exit"
    OUTSIDE = "outside"


_WALL, _WINDOW, _PENTRY, _PEXIT, _OUTSIDE = 0, 1, 2, 3, 4
_SURFACE_BY_CODE = {
    _WALL: Surface.WALL,
    _WINDOW: Surface.WINDOW,
    _PENTRY: Surface.PORTAL_ENTRY,
    _PEXIT: Surface.PORTAL_EXIT,
    _OUTSIDE: Surface.OUTSIDE,
}


def classify_rays(
    spec: TunnelSpec, head_local: np.ndarray, dirs_local: np.ndarray
) -> np.ndarray:
    """First-hit surface codes for rays from a head point inside the cabin.

    ``head_local`` is (3,) in cabin coordinates (x along axis in [0, L], y up,
    z toward the side wall); ``dirs_local`` is (n, 3) unit directions. Glass
    stripes and solid bands are distinguished on the side walls; floor,
    ceiling, and inter-stripe bands classify as wall.
    """
    length = spec.cabin_length
    height = spec.height
    half_w = spec.width / 2.0
    x0, y0, z0 = head_local
    if not (0.0 <= x0 <= length and 0.0 <= y0 <= height and -half_w <= z0 <= half_w):
        raise HeadOutsideCabin(f"head at {tuple(head_local)} is outside the cabin volume")

    d = np.asarray(dirs_local, dtype=float)
    n = d.shape[0]
    # Parametric distance to each bounding plane; non-approaching rays get inf.
    with np.errstate(divide="ignore", invalid="ignore"):
        t_low = np.stack(
            [
                np.where(d[:, 0] < 0, (0.0 - x0) / d[:, 0], np.inf),
                np.where(d[:, 1] < 0, (0.0 - y0) / d[:, 1], np.inf),
                np.where(d[:, 2] < 0, (-half_w - z0) / d[:, 2], np.inf),
            ],
            axis=1,
        )
        t_high = np.stack(
            [
                np.where(d[:, 0] > 0, (length - x0) / d[:, 0], np.inf),
                np.where(d[:, 1] > 0, (height - y0) / d[:, 1], np.inf),
                np.where(d[:, 2] > 0, (half_w - z0) / d[:, 2], np.inf),
            ],
            axis=1,
        )
    t_faces = np.minimum(t_low, t_high)  # (n, 3) per-axis first exit
    face_axis = np.argmin(t_faces, axis=1)
    t_hit = t_faces[np.arange(n), face_axis]

    codes = np.full(n, _WALL, dtype=np.int64)
    # x faces are the portals.
    x_face = face_axis == 0
    codes[x_face & (d[:, 0] > 0)] = _PEXIT
    codes[x_face & (d[:, 0] < 0)] = _PENTRY
    # z faces are the striped side walls; check the hit height against bands.
    z_face = face_axis == 2
    if np.any(z_face):
        y_hit = y0 + t_hit[z_face] * d[z_face, 1]
        in_band = np.zeros(y_hit.shape, dtype=bool)
        for bottom, top in spec.windows.bands():
            in_band |= (y_hit >= bottom) & (y_hit <= top)
        sub = codes[z_face]
        sub[in_band] = _WINDOW
        codes[z_face] = sub
    return codes


def window_mask(spec: TunnelSpec, head: Pose, view_dir: Vec3, state: TraversalState) -> Surface:
    """Classify what one view ray from inside the cabin hits first."""
    basis = spec.basis_matrix()
    origin = spec.cabin_origin(state.cabin_origin_offset(spec))
    rel = head.position - origin
    head_local = basis @ np.array(rel.as_tuple())
    dir_local = basis @ np.array(view_dir.normalized().as_tuple())
    code = classify_rays(spec, head_local, dir_local[None, :])[0]
    return _SURFACE_BY_CODE[int(code)]
