"""Rigid-body math: vectors, quaternion rotations, poses, playspace rectangle.

World coordinates are right-handed, y-up, meters. The floor is the x-z plane.
All types are immutable values; operations return new instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "Vec2",
    "Vec3",
    "Quat",
    "Pose",
    "Transform",
    "PlaySpace",
    "Segment",
    "UP",
    "compose",
    "decompose",
]


@dataclass(frozen=True, slots=True)
class Vec2:
    x: float = 0.0
    y: float = 0.0

    def __add__(self, other: Vec2) -> Vec2:
        return Vec2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: Vec2) -> Vec2:
        return Vec2(self.x - other.x, self.y - other.y)

    def __mul__(self, s: float) -> Vec2:
        return Vec2(self.x * s, self.y * s)

    __rmul__ = __mul__

    def norm(self) -> float:
        return math.hypot(self.x, self.y)


@dataclass(frozen=True, slots=True)
class Vec3:
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __add__(self, other: Vec3) -> Vec3:
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: Vec3) -> Vec3:
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __mul__(self, s: float) -> Vec3:
        return Vec3(self.x * s, self.y * s, self.z * s)

    __rmul__ = __mul__

    def __neg__(self) -> Vec3:
        return Vec3(-self.x, -self.y, -self.z)

    def dot(self, other: Vec3) -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def cross(self, other: Vec3) -> Vec3:
        return Vec3(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def horizontal_norm(self) -> float:
        """Length of the floor-plane (x-z) component."""
        return math.hypot(self.x, self.z)

    def normalized(self) -> Vec3:
        n = self.norm()
        if n < 1e-12:
            raise ValueError("cannot normalize near-zero vector")
        return Vec3(self.x / n, self.y / n, self.z / n)

    def xz(self) -> Vec2:
        return Vec2(self.x, self.z)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)


UP = Vec3(0.0, 1.0, 0.0)


@dataclass(frozen=True, slots=True)
class Quat:
    """Unit quaternion (w, x, y, z). Renormalized after every composition."""

    w: float = 1.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __mul__(self, other: Quat) -> Quat:
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return Quat(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ).normalized()

    def conjugate(self) -> Quat:
        return Quat(self.w, -self.x, -self.y, -self.z)

    def norm(self) -> float:
        return math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)

    def normalized(self) -> Quat:
        n = self.norm()
        if n < 1e-12:
            raise ValueError("degenerate quaternion")
        return Quat(self.w / n, self.x / n, self.y / n, self.z / n)

    def rotate(self, v: Vec3) -> Vec3:
        # q v q* expanded; avoids building intermediate quaternions.
        w, x, y, z = self.w, self.x, self.y, self.z
        tx = 2.0 * (y * v.z - z * v.y)
        ty = 2.0 * (z * v.x - x * v.z)
        tz = 2.0 * (x * v.y - y * v.x)
        return Vec3(
            v.x + w * tx + (y * tz - z * ty),
            v.y + w * ty + (z * tx - x * tz),
            v.z + w * tz + (x * ty - y * tx),
        )

    def yaw(self) -> float:
        """Heading angle about +y, in radians."""
        fwd = self.rotate(Vec3(1.0, 0.0, 0.0))
        return math.atan2(-fwd.z, fwd.x)

    @staticmethod
    def identity() -> Quat:
        return Quat(1.0, 0.0, 0.0, 0.0)

    @staticmethod
    def from_axis_angle(axis: Vec3, angle: float) -> Quat:
        a = axis.normalized()
        h = angle * 0.5
        s = math.sin(h)
        return Quat(math.cos(h), a.x * s, a.y * s, a.z * s).normalized()

    @staticmethod
    def from_yaw(yaw: float) -> Quat:
        """Rotation about +y; positive yaw turns +x toward -z."""
        return Quat.from_axis_angle(UP, yaw)


@dataclass(frozen=True, slots=True)
class Pose:
    """Rigid placement: a position plus a unit orientation."""

    position: Vec3 = Vec3()
    orientation: Quat = Quat()

    def transform_point(self, p: Vec3) -> Vec3:
        return self.position + self.orientation.rotate(p)

    def inverse(self) -> Pose:
        inv = self.orientation.conjugate()
        return Pose(inv.rotate(-self.position), inv)

    @staticmethod
    def identity() -> Pose:
        return Pose()


def compose(parent: Pose, child: Pose) -> Pose:
    """Express ``child`` (given in the parent's frame) in the parent's parent frame."""
    return Pose(
        parent.position + parent.orientation.rotate(child.position),
        parent.orientation * child.orientation,
    )


def decompose(world: Pose, parent: Pose) -> Pose:
    """Inverse of compose: the child pose such that compose(parent, child) == world."""
    return compose(parent.inverse(), world)


@dataclass(frozen=True, slots=True)
class Transform:
    """Rigid mapping of points: rotate then translate."""

    rotation: Quat = Quat()
    translation: Vec3 = Vec3()

    def apply(self, p: Vec3) -> Vec3:
        return self.rotation.rotate(p) + self.translation

    def apply_direction(self, d: Vec3) -> Vec3:
        return self.rotation.rotate(d)

    def compose(self, inner: Transform) -> Transform:
        """self after inner: (self ∘ inner)(p) == self.apply(inner.apply(p))."""
        return Transform(
            self.rotation * inner.rotation,
            self.rotation.rotate(inner.translation) + self.translation,
        )

    def inverse(self) -> Transform:
        inv = self.rotation.conjugate()
        return Transform(inv, inv.rotate(-self.translation))

    @staticmethod
    def identity() -> Transform:
        return Transform()

    @staticmethod
    def between(source: Pose, target: Pose) -> Transform:
        """Transform mapping points expressed at ``source`` to the same points at ``target``."""
        rot = target.orientation * source.orientation.conjugate()
        return Transform(rot, target.position - rot.rotate(source.position))


@dataclass(frozen=True, slots=True)
class PlaySpace:
    """Axis-aligned tracking rectangle on the floor plane (x-z), in meters."""

    origin: Vec2 = Vec2(0.0, 0.0)
    half_extents: Vec2 = Vec2(2.0, 2.0)

    def __post_init__(self) -> None:
        if self.half_extents.x <= 0.0 or self.half_extents.y <= 0.0:
            raise ValueError("playspace half extents must be strictly positive")

    def margin(self, point: Vec2) -> float:
        """Signed distance to the nearest boundary: positive inside, negative outside."""
        dx = self.half_extents.x - abs(point.x - self.origin.x)
        dy = self.half_extents.y - abs(point.y - self.origin.y)
        return min(dx, dy)

    def contains(self, point: Vec2) -> bool:
        return self.margin(point) >= 0.0

    def area(self) -> float:
        return 4.0 * self.half_extents.x * self.half_extents.y


@dataclass(frozen=True, slots=True)
class Segment:
    """Directed straight segment from start to end; degenerate segments rejected."""

    start: Vec3
    end: Vec3

    def __post_init__(self) -> None:
        if (self.end - self.start).norm() <= 1e-9:
            raise ValueError("degenerate segment: start and end coincide")

    def length(self) -> float:
        return (self.end - self.start).norm()

    def direction(self) -> Vec3:
        return (self.end - self.start).normalized()


def segment_length(s: Segment) -> float:
    return s.length()


def playspace_contains(ps: PlaySpace, point: Vec2) -> bool:
    return ps.contains(point)


def playspace_margin(ps: PlaySpace, point: Vec2) -> float:
    return ps.margin(point)
