"""Rigid organ shapes with exact signed-distance and closest-point queries.

Organs are approximated by analytic primitives (sphere, capsule, slab) so
every distance query is exact and cheap enough for a 1 kHz servo loop.
Units are meters throughout; normals always point outward.

All functions here are pure and operate on immutable values; they are safe
to call from any thread.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError

Vec3 = np.ndarray

# Query points closer to a degenerate locus (sphere center, capsule axis)
# than this are resolved by the fixed fallback direction.
_DEGENERATE_EPS = 1e-12

_Z = np.array([0.0, 0.0, 1.0])
_X = np.array([1.0, 0.0, 0.0])


def as_vec3(v) -> Vec3:
    """Coerce to an immutable float64 3-vector, rejecting non-finite input."""
    a = np.array(v, dtype=np.float64)
    if a.shape != (3,):
        raise InputError(f"expected a 3-vector, got shape {a.shape}")
    if not (math.isfinite(a[0]) and math.isfinite(a[1]) and math.isfinite(a[2])):
        raise InputError(f"non-finite 3-vector: {a}")
    a.flags.writeable = False
    return a


def _norm(v: Vec3) -> float:
    # same pairwise sum as np.linalg.norm on a 3-vector, far less overhead
    return math.sqrt(float(np.dot(v, v)))


@dataclass(frozen=True)
class Sphere:
    center: Vec3
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_vec3(self.center))
        if not (self.radius > 0.0):
            raise ConfigError(f"sphere radius must be > 0, got {self.radius}")


@dataclass(frozen=True)
class Capsule:
    """Segment from `a` to `b` swept by a sphere of `radius`."""

    a: Vec3
    b: Vec3
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "a", as_vec3(self.a))
        object.__setattr__(self, "b", as_vec3(self.b))
        if not (self.radius > 0.0):
            raise ConfigError(f"capsule radius must be > 0, got {self.radius}")


@dataclass(frozen=True)
class Slab:
    """Infinite wall of finite thickness, centered on the plane through
    `point` with outward `normal`; the two faces sit at ±thickness/2."""

    point: Vec3
    normal: Vec3
    thickness: float

    def __post_init__(self):
        object.__setattr__(self, "point", as_vec3(self.point))
        n = as_vec3(self.normal)
        norm = float(np.linalg.norm(n))
        if norm < 1e-12:
            raise ConfigError("slab normal must be nonzero")
        object.__setattr__(self, "normal", n / norm)
        if not (self.thickness > 0.0):
            raise ConfigError(f"slab thickness must be > 0, got {self.thickness}")


Shape = Sphere | Capsule | Slab


def signed_distance(shape: Shape, p) -> float:
    """Signed distance from `p` to the shape surface: negative inside,
    positive outside, zero on the surface."""
    return _signed_distance(shape, as_vec3(p))


def _signed_distance(shape: Shape, p: Vec3) -> float:
    # hot path: assumes p already validated
    if isinstance(shape, Sphere):
        return _norm(p - shape.center) - shape.radius
    if isinstance(shape, Capsule):
        return _norm(p - _segment_closest(shape, p)) - shape.radius
    if isinstance(shape, Slab):
        s = float(np.dot(p - shape.point, shape.normal))
        return abs(s) - 0.5 * shape.thickness
    raise InputError(f"unknown shape type: {type(shape).__name__}")


def closest_surface_point(shape: Shape, p) -> tuple[Vec3, Vec3]:
    """Nearest point on the shape surface and the outward unit normal there.

    Works for interior as well as exterior query points. Degenerate queries
    (exactly on a sphere center or capsule axis) resolve to a fixed fallback
    direction so results stay deterministic.
    """
    return _closest_surface_point(shape, as_vec3(p))


def _closest_surface_point(shape: Shape, p: Vec3) -> tuple[Vec3, Vec3]:
    if isinstance(shape, Sphere):
        u = p - shape.center
        n = _safe_direction(u, _Z)
        return shape.center + shape.radius * n, n
    if isinstance(shape, Capsule):
        q = _segment_closest(shape, p)
        u = p - q
        axis = shape.b - shape.a
        n = _safe_direction(u, _perpendicular_fallback(axis))
        return q + shape.radius * n, n
    if isinstance(shape, Slab):
        s = float(np.dot(p - shape.point, shape.normal))
        side = 1.0 if s >= 0.0 else -1.0
        n = side * shape.normal
        point = p + (side * 0.5 * shape.thickness - s) * shape.normal
        return point, n
    raise InputError(f"unknown shape type: {type(shape).__name__}")


def _segment_closest(capsule: Capsule, p: Vec3) -> Vec3:
    ab = capsule.b - capsule.a
    denom = float(np.dot(ab, ab))
    if denom < _DEGENERATE_EPS:
        return capsule.a.copy()
    t = float(np.dot(p - capsule.a, ab)) / denom
    t = min(1.0, max(0.0, t))
    return capsule.a + t * ab


def _safe_direction(u: Vec3, fallback: Vec3) -> Vec3:
    norm = _norm(u)
    if norm < _DEGENERATE_EPS:
        return fallback
    return u / norm


def _perpendicular_fallback(axis: Vec3) -> Vec3:
    """Fixed outward direction for points exactly on a capsule axis: +z
    projected perpendicular to the axis, or +x when the axis runs along z."""
    norm = _norm(axis)
    if norm < _DEGENERATE_EPS:
        return _Z
    a = axis / norm
    perp = _Z - float(np.dot(_Z, a)) * a
    n = _norm(perp)
    if n < 1e-9:
        return _X
    return perp / n


@dataclass(frozen=True)
class OrganModel:
    """One rigid organ: identity, shape, and its force-model parameters."""

    organ_id: str
    name: str
    shape: Shape
    material: "HapticMaterial"  # noqa: F821 - imported lazily to avoid a cycle

    def __post_init__(self):
        if not self.organ_id:
            raise ConfigError("organ_id must be a non-empty string")


@dataclass(frozen=True)
class Scene:
    """Ordered collection of organs; order is part of the scene identity so
    replays stay deterministic."""

    organs: tuple[OrganModel, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "organs", tuple(self.organs))
        ids = [o.organ_id for o in self.organs]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise ConfigError(f"duplicate organ ids: {dupes}")

    def organ(self, organ_id: str) -> OrganModel:
        for o in self.organs:
            if o.organ_id == organ_id:
                return o
        raise InputError(f"unknown organ_id: {organ_id}")

    def with_material(self, organ_id: str, material) -> "Scene":
        """New scene with one organ's material swapped (hot override)."""
        found = False
        organs = []
        for o in self.organs:
            if o.organ_id == organ_id:
                organs.append(OrganModel(o.organ_id, o.name, o.shape, material))
                found = True
            else:
                organs.append(o)
        if not found:
            raise InputError(f"unknown organ_id: {organ_id}")
        return Scene(tuple(organs))


def scene_nearest(scene: Scene, p) -> tuple[str, float, Vec3, Vec3] | None:
    """Organ minimizing signed distance to `p`, with its closest surface
    point and outward normal. Ties break toward the lowest organ_id; None
    for an empty scene."""
    p = as_vec3(p)
    best = None
    for organ in scene.organs:
        d = _signed_distance(organ.shape, p)
        if best is None or d < best[1] or (d == best[1] and organ.organ_id < best[0]):
            best = (organ.organ_id, d, organ)
    if best is None:
        return None
    organ_id, d, organ = best
    point, normal = _closest_surface_point(organ.shape, p)
    return organ_id, d, point, normal
