"""Planar objects, gripper layouts and finger/object contact resolution.

Everything lives in the gripper frame: the grasp center is the origin and the
gripper Z-axis points out of the plane. Objects are 2-D cross-sections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

# |cos| of the incidence angle below which a ray is treated as grazing.
TANGENT_TOL = 1e-6
# Two entering edges closer than this along the ray are a vertex hit.
VERTEX_TOL = 1e-12

SHAPE_KINDS = ("circle", "square", "rectangle", "triangle")


class SceneError(ValueError):
    pass


def wrap_angle(angle: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(angle + math.pi, TWO_PI)
    if a <= 0.0:
        a += TWO_PI
    return a - math.pi


def unit(angle: float) -> np.ndarray:
    return np.array([math.cos(angle), math.sin(angle)])


def rot(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def cross2(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


@dataclass(frozen=True)
class ObjectShape:
    """A primitive cross-section with a planar pose.

    ``size`` is ``(radius,)`` for circles, ``(side,)`` for squares and
    equilateral triangles, and ``(width, height)`` for rectangles, all in
    meters. ``shape_class`` is an optional label (e.g. ``"cylinder"``) that
    carries what the planar section cannot show: a cylinder lying along the
    finger pads looks like a circle in-plane but is flat out-of-plane.
    """

    kind: str
    size: tuple
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0
    name: str = ""
    shape_class: Optional[str] = None

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise SceneError(f"unknown shape kind {self.kind!r}")
        size = tuple(float(v) for v in np.atleast_1d(self.size))
        expected = 2 if self.kind == "rectangle" else 1
        if len(size) != expected:
            raise SceneError(f"{self.kind} needs {expected} size parameter(s), got {len(size)}")
        if not all(math.isfinite(v) and v > 0.0 for v in size):
            raise SceneError(f"size parameters must be strictly positive, got {size}")
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", float(self.theta) % TWO_PI)

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def is_polygon(self) -> bool:
        return self.kind != "circle"

    def body_vertices(self) -> np.ndarray:
        """Counter-clockwise vertices in the body frame."""
        if self.kind == "square":
            h = self.size[0] / 2.0
            return np.array([[h, -h], [h, h], [-h, h], [-h, -h]])
        if self.kind == "rectangle":
            a, b = self.size[0] / 2.0, self.size[1] / 2.0
            return np.array([[a, -b], [a, b], [-a, b], [-a, -b]])
        if self.kind == "triangle":
            # circumradius s/sqrt(3); outward face normals at 0, 120, 240 deg
            rc = self.size[0] / math.sqrt(3.0)
            angles = np.radians([-60.0, 60.0, 180.0])
            return rc * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        raise SceneError("circles have no vertices")

    def vertices(self) -> np.ndarray:
        return self.body_vertices() @ rot(self.theta).T + self.center

    def with_pose(self, x: float, y: float, theta: float) -> "ObjectShape":
        return replace(self, x=x, y=y, theta=theta)


class BaseMode(str, Enum):
    CIRCULAR = "circular"
    LATERAL = "lateral"
    PARALLEL = "parallel"


@dataclass(frozen=True)
class FingerCommand:
    """Per-finger joint state.

    ``proximal`` is the proximal-joint rotation about the gripper Z-axis,
    relative to the finger's nominal heading in the current base mode.
    ``distal`` is recorded for completeness; the planar model folds the
    distal closure into ``grip``.
    """

    proximal: float = 0.0
    distal: float = 0.0
    grip: float = 6.0
    active: bool = True


@dataclass(frozen=True)
class GripperConfiguration:
    base_mode: BaseMode
    base_rotation: float = 0.0
    fingers: tuple = field(default_factory=lambda: (FingerCommand(),) * 3)

    def __post_init__(self):
        object.__setattr__(self, "base_mode", BaseMode(self.base_mode))
        object.__setattr__(self, "fingers", tuple(self.fingers))
        if len(self.fingers) != 3:
            raise SceneError(f"gripper has exactly 3 fingers, got {len(self.fingers)}")
        if sum(f.active for f in self.fingers) < 2:
            raise SceneError("at least 2 fingers must be active")
        if any(f.grip < 0.0 or not math.isfinite(f.grip) for f in self.fingers):
            raise SceneError("grip commands must be finite and nonnegative")

    @classmethod
    def nominal(cls, mode, rotation: float = 0.0, grip: float = 6.0) -> "GripperConfiguration":
        return cls(BaseMode(mode), rotation, (FingerCommand(grip=grip),) * 3)

    @property
    def active(self) -> list:
        return [i for i, f in enumerate(self.fingers) if f.active]

    @property
    def total_grip(self) -> float:
        return sum(f.grip for f in self.fingers if f.active)

    def replace_finger(self, i: int, **changes) -> "GripperConfiguration":
        fingers = list(self.fingers)
        fingers[i] = replace(fingers[i], **changes)
        return replace(self, fingers=tuple(fingers))

    def with_grips(self, grips: Sequence[float]) -> "GripperConfiguration":
        fingers = tuple(replace(f, grip=float(g)) for f, g in zip(self.fingers, grips))
        return replace(self, fingers=fingers)

    def with_mode(self, mode, rotation: float) -> "GripperConfiguration":
        """Switch base mode, resetting proximal offsets and reactivating fingers."""
        fingers = tuple(replace(f, proximal=0.0, active=True) for f in self.fingers)
        return GripperConfiguration(BaseMode(mode), rotation, fingers)


@dataclass(frozen=True)
class GripperGeometry:
    """Gripper dimensions and stiffnesses (meters, N/m)."""

    base_radius: float = 0.10
    parallel_offset: float = 0.015
    pad_width: float = 0.02
    max_compression: float = 0.010
    closure_stiffness: float = 2000.0
    # distance from the aim point to the finger's own rotation axis
    pivot_radius: float = 0.025

    def __post_init__(self):
        for name in ("base_radius", "pad_width", "max_compression", "closure_stiffness"):
            if not getattr(self, name) > 0.0:
                raise SceneError(f"{name} must be positive")
        if self.parallel_offset < 0.0:
            raise SceneError("parallel_offset must be nonnegative")
        if not 0.0 <= self.pivot_radius < self.base_radius:
            raise SceneError("pivot_radius must lie in [0, base_radius)")


DEFAULT_GEOMETRY = GripperGeometry()

# (base angle, lateral offset sign) per finger, relative to base_rotation.
_LAYOUT = {
    BaseMode.CIRCULAR: ((0.0, 0), (2 * math.pi / 3, 0), (4 * math.pi / 3, 0)),
    # fingers 0/1 face each other, finger 2 sits on their mid-plane
    BaseMode.LATERAL: ((math.pi / 2, 0), (-math.pi / 2, 0), (math.pi, 0)),
    # fingers 0/1 side by side, finger 2 opposite
    BaseMode.PARALLEL: ((math.pi / 2, 1), (math.pi / 2, -1), (-math.pi / 2, 0)),
}


def finger_ray(config: GripperConfiguration, i: int, geometry: GripperGeometry = DEFAULT_GEOMETRY):
    """Ray origin and unit approach direction of finger ``i``.

    With the proximal joint at zero every finger closes along a line through
    its aim point: the grasp center, or a point beside it for the
    side-by-side pair of the parallel mode. The proximal joint turns the
    finger about its own long axis, which crosses the nominal line
    ``pivot_radius`` outside the aim point, near where the pad meets a
    palm-sized object. Turning therefore re-orients the pad without sliding
    it far along the surface.
    """
    angle, side = _LAYOUT[config.base_mode][i]
    angle += config.base_rotation
    aim = side * geometry.parallel_offset * unit(angle + math.pi / 2)
    pivot = aim + geometry.pivot_radius * unit(angle)
    direction = unit(angle + math.pi + config.fingers[i].proximal)
    return pivot - (geometry.base_radius - geometry.pivot_radius) * direction, direction


@dataclass(frozen=True)
class ContactPatch:
    """Finger/object contact.

    ``normal`` is the inward unit surface normal (the direction the finger
    pushes the object). ``approach`` is the finger's approach direction, so
    the signed angle between them is the twist the soft finger takes up.
    ``offset`` is the tangential offset of the contact centroid from the pad
    center; rays pass through the pad center, so grasps always report 0.
    """

    point: tuple
    normal: tuple
    depth: float
    extent: float
    approach: tuple
    curvature: float = 0.0
    offset: float = 0.0
    corner: bool = False

    def __post_init__(self):
        if self.depth < 0.0:
            raise SceneError("penetration depth must be nonnegative")
        n = np.asarray(self.normal, dtype=float)
        norm = math.hypot(*n)
        if abs(norm - 1.0) > 1e-12:
            n = n / norm
        object.__setattr__(self, "normal", (float(n[0]), float(n[1])))
        object.__setattr__(self, "point", tuple(float(v) for v in self.point))
        object.__setattr__(self, "approach", tuple(float(v) for v in self.approach))

    @property
    def in_contact(self) -> bool:
        return self.depth > 0.0

    @property
    def twist(self) -> float:
        """Signed angle from the surface normal to the finger approach (rad)."""
        return math.atan2(cross2(self.normal, self.approach), float(np.dot(self.normal, self.approach)))

    def with_depth(self, depth: float) -> "ContactPatch":
        return replace(self, depth=depth)


@dataclass(frozen=True)
class RayHit:
    distance: float
    point: np.ndarray
    normal: np.ndarray
    extent: float
    curvature: float
    corner: bool


def _polygon_hit(obj: ObjectShape, origin, direction, pad_width: float) -> Optional[RayHit]:
    # Cyrus-Beck clipping against the convex polygon
    verts = obj.vertices()
    m = len(verts)
    t_in, t_out = -math.inf, math.inf
    entering = []
    for k in range(m):
        a, b = verts[k], verts[(k + 1) % m]
        edge = b - a
        n_out = np.array([edge[1], -edge[0]]) / math.hypot(*edge)
        denom = float(np.dot(direction, n_out))
        num = float(np.dot(a - origin, n_out))
        if abs(denom) < TANGENT_TOL:
            if num < 0.0:
                return None
            continue
        t = num / denom
        if denom < 0.0:
            entering.append((t, k, n_out))
            t_in = max(t_in, t)
        else:
            t_out = min(t_out, t)
    if not entering or t_in < 0.0 or t_out - t_in <= VERTEX_TOL:
        return None
    faces = [(k, n) for t, k, n in entering if t_in - t <= VERTEX_TOL]
    point = origin + t_in * direction
    if len(faces) == 1:
        k, n_out = faces[0]
        a, b = verts[k], verts[(k + 1) % m]
        half = pad_width / 2.0
        extent = min(half, float(np.linalg.norm(point - a))) + min(half, float(np.linalg.norm(point - b)))
        return RayHit(t_in, point, -n_out, extent, 0.0, False)
    # corner: angle-bisector normal
    bis = -(faces[0][1] + faces[1][1])
    bis /= math.hypot(*bis)
    return RayHit(t_in, point, bis, pad_width / 2.0, 0.0, True)


def _circle_hit(obj: ObjectShape, origin, direction, pad_width: float) -> Optional[RayHit]:
    r = obj.size[0]
    rel = origin - obj.center
    b = float(np.dot(direction, rel))
    c = float(np.dot(rel, rel)) - r * r
    disc = b * b - c
    if disc <= 0.0 or c <= 0.0:
        return None
    t = -b - math.sqrt(disc)
    if t < 0.0:
        return None
    point = origin + t * direction
    normal = (obj.center - point) / r
    if abs(float(np.dot(normal, direction))) < TANGENT_TOL:
        return None
    return RayHit(t, point, normal, min(pad_width, math.pi * r), 1.0 / r, False)


def ray_hit(obj: ObjectShape, origin, direction, pad_width: float = DEFAULT_GEOMETRY.pad_width) -> Optional[RayHit]:
    """First boundary crossing of the ray ``origin + t*direction``, ``t >= 0``."""
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    if obj.kind == "circle":
        return _circle_hit(obj, origin, direction, pad_width)
    return _polygon_hit(obj, origin, direction, pad_width)


def closure_depth(grip: float, extent: float, geometry: GripperGeometry = DEFAULT_GEOMETRY) -> float:
    """Soft-finger compression that realizes a grip command on a patch."""
    factor = min(extent / geometry.pad_width, 1.0)
    if factor <= 0.0:
        return 0.0
    return min(grip / (geometry.closure_stiffness * factor), geometry.max_compression)


def resolve_contacts(obj: ObjectShape, config: GripperConfiguration,
                     geometry: GripperGeometry = DEFAULT_GEOMETRY) -> list:
    """Contact of each finger along its approach ray.

    Returns ``[(finger_index, ContactPatch or None), ...]`` for all three
    fingers; released fingers and rays that miss (or graze) the object
    report ``None``.
    """
    out = []
    for i, finger in enumerate(config.fingers):
        if not finger.active:
            out.append((i, None))
            continue
        origin, direction = finger_ray(config, i, geometry)
        hit = ray_hit(obj, origin, direction, geometry.pad_width)
        if hit is None:
            out.append((i, None))
            continue
        patch = ContactPatch(
            point=tuple(hit.point),
            normal=tuple(hit.normal),
            depth=closure_depth(finger.grip, hit.extent, geometry),
            extent=hit.extent,
            approach=tuple(direction),
            curvature=hit.curvature,
            corner=hit.corner,
        )
        out.append((i, patch))
    return out


@dataclass(frozen=True)
class PoseNoiseSpec:
    """Uniform translation in a disc plus uniform rotation in ``[-max, max]``."""

    translation_radius: float = 0.005
    rotation_max: float = math.radians(10.0)

    def __post_init__(self):
        if self.translation_radius < 0.0 or self.rotation_max < 0.0:
            raise SceneError("noise magnitudes must be nonnegative")


def perturb_pose(obj: ObjectShape, noise: PoseNoiseSpec, rng: np.random.Generator) -> ObjectShape:
    # always draw, so the stream position does not depend on the magnitudes
    u_r, u_phi, u_rot = rng.random(3)
    r = noise.translation_radius * math.sqrt(u_r)
    phi = TWO_PI * u_phi
    dtheta = noise.rotation_max * (2.0 * u_rot - 1.0)
    if r == 0.0 and dtheta == 0.0:
        return obj
    return obj.with_pose(obj.x + r * math.cos(phi), obj.y + r * math.sin(phi), obj.theta + dtheta)
