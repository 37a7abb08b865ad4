"""Extended spring-damper force rendering for single-point rigid contact.

The total force fed back to the user's hand combines four terms: an elastic
spring pushing the stylus out of the organ along the surface normal, viscous
damping of the normal velocity component, kinetic friction opposing
tangential sliding, and a pop-through term that holds extra resistance until
a depth threshold is crossed, then vanishes (the "puncture" drop).

Vector convention: with outward unit normal n and penetration depth d >= 0,
the stylus sits at x = x0 - d*n, so the spring term is +k*d*n (outward).
Damping acts on the normal velocity component only; friction acts
tangentially; the pop term acts along +n while the contact is in the
pre-puncture phase.

Everything in this module is a pure function over immutable values.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError
from .geometry import (Scene, Vec3, _closest_surface_point, _norm,
                       _signed_distance, as_vec3)

# Engine-wide defaults; session config can override (see service docs).
DEFAULT_F_MAX = 3.3          # N, peak force of a typical desk stylus
DEFAULT_V_DEADBAND = 1e-4    # m/s, below this sliding speed friction is off
DEFAULT_ALPHA = 0.2          # velocity filter gain at dt = 1 ms
DEFAULT_POST_POP_SCALE = 0.3

_ZERO3 = np.zeros(3)
_UNIT_TOL = 1e-9


class Phase(enum.Enum):
    """Contact phase of the stylus against one organ."""

    FREE = "free"
    CONTACT = "contact"
    PENETRATED = "penetrated"


class PhaseEvent(enum.Enum):
    CONTACT_START = "contact_start"
    POP_THROUGH = "pop_through"
    CONTACT_END = "contact_end"


@dataclass(frozen=True)
class HapticMaterial:
    """Per-organ parameter set for the force model.

    stiffness_k            N/m, elastic resistance per meter of penetration
    damping_b              N*s/m, viscosity against normal motion
    friction_mu            dimensionless kinetic friction coefficient
    pop_force              N, extra resistance held until pop-through
    pop_depth              m, penetration depth that triggers pop-through
    post_pop_stiffness_scale  stiffness multiplier after pop-through, in [0, 1]
    """

    stiffness_k: float
    damping_b: float = 0.0
    friction_mu: float = 0.0
    pop_force: float = 0.0
    pop_depth: float = 0.005
    post_pop_stiffness_scale: float = DEFAULT_POST_POP_SCALE

    def __post_init__(self):
        for name in ("stiffness_k", "damping_b", "friction_mu", "pop_force",
                     "pop_depth", "post_pop_stiffness_scale"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v)):
                raise ConfigError(f"{name} must be finite, got {v!r}")
        if self.stiffness_k < 0:
            raise ConfigError("stiffness must be >= 0")
        if self.damping_b < 0:
            raise ConfigError("damping must be >= 0")
        if self.friction_mu < 0:
            raise ConfigError("friction coefficient must be >= 0")
        if self.pop_force < 0:
            raise ConfigError("pop force must be >= 0")
        if not self.pop_depth > 0:
            raise ConfigError("pop depth must be > 0")
        if not 0.0 <= self.post_pop_stiffness_scale <= 1.0:
            raise ConfigError("post-pop stiffness scale must lie in [0, 1]")


@dataclass(frozen=True)
class StylusSample:
    """Timestamped stylus state: position plus the filtered velocity of the
    interaction point. Times are seconds since session start."""

    time: float
    position: Vec3
    velocity: Vec3

    def __post_init__(self):
        object.__setattr__(self, "position", as_vec3(self.position))
        object.__setattr__(self, "velocity", as_vec3(self.velocity))


@dataclass(frozen=True)
class ContactState:
    """Resolved contact for one stylus position.

    `proxy_position` is the surface-constrained proxy point (the spring's
    equilibrium end); `depth` is penetration depth, <= 0 meaning no contact.
    When nothing is penetrated, organ_id is None but proxy/normal still
    describe the nearest organ so callers can anticipate contact.
    """

    organ_id: str | None
    proxy_position: Vec3
    depth: float
    normal: Vec3
    phase: Phase = Phase.FREE

    def __post_init__(self):
        object.__setattr__(self, "proxy_position", as_vec3(self.proxy_position))
        object.__setattr__(self, "normal", as_vec3(self.normal))
        if self.organ_id is not None:
            n = _norm(self.normal)
            if abs(n - 1.0) > _UNIT_TOL:
                raise InputError(f"contact normal must be unit length, |n| = {n}")


@dataclass(frozen=True)
class ForceBreakdown:
    """The four force terms, the normal force magnitude, and the clamped
    total. `raw_total` keeps the unclamped sum so logs expose clamping."""

    spring: Vec3
    damping: Vec3
    friction: Vec3
    pop: Vec3
    normal_force: float
    raw_total: Vec3
    total: Vec3

    def __post_init__(self):
        for name in ("spring", "damping", "friction", "pop", "raw_total", "total"):
            object.__setattr__(self, name, as_vec3(getattr(self, name)))

    @property
    def clamped(self) -> bool:
        return not np.array_equal(self.raw_total, self.total)


ZERO_FORCE = ForceBreakdown(_ZERO3, _ZERO3, _ZERO3, _ZERO3, 0.0, _ZERO3, _ZERO3)


def resolve_contact(scene: Scene, position) -> ContactState:
    """Contact query: the organ penetrated deepest wins (ties go to the
    lowest organ_id). With nothing penetrated the nearest organ is reported
    with organ_id None and non-positive depth. The returned phase is
    provisional (FREE/CONTACT from depth alone); the caller owns phase
    memory via step_phase."""
    position = as_vec3(position)
    deepest = None  # (depth, organ_id, organ), depth > 0
    nearest = None  # (sd, organ_id, organ)
    for organ in scene.organs:
        sd = _signed_distance(organ.shape, position)
        d = -sd
        if d > 0.0 and (deepest is None or d > deepest[0]
                        or (d == deepest[0] and organ.organ_id < deepest[1])):
            deepest = (d, organ.organ_id, organ)
        if nearest is None or sd < nearest[0] \
                or (sd == nearest[0] and organ.organ_id < nearest[1]):
            nearest = (sd, organ.organ_id, organ)
    if deepest is not None:
        depth, organ_id, organ = deepest
        proxy, normal = _closest_surface_point(organ.shape, position)
        return ContactState(organ_id, proxy, depth, normal, Phase.CONTACT)
    if nearest is None:
        return ContactState(None, position, 0.0, np.array([0.0, 0.0, 1.0]), Phase.FREE)
    sd, _, organ = nearest
    point, normal = _closest_surface_point(organ.shape, position)
    return ContactState(None, point, -sd, normal, Phase.FREE)


def estimate_velocity(prev_filtered, prev_position, position, dt: float,
                      alpha: float = DEFAULT_ALPHA) -> Vec3:
    """Exponentially smoothed finite-difference velocity estimate."""
    if not dt > 0:
        raise InputError(f"dt must be > 0, got {dt}")
    if not 0.0 < alpha <= 1.0:
        raise InputError(f"alpha must lie in (0, 1], got {alpha}")
    prev_filtered = as_vec3(prev_filtered)
    raw = (as_vec3(position) - as_vec3(prev_position)) / dt
    return alpha * raw + (1.0 - alpha) * prev_filtered


def step_phase(prev_phase: Phase, depth: float,
               material: HapticMaterial) -> tuple[Phase, PhaseEvent | None]:
    """One step of the pop-through phase machine.

    Free -> Contact on first penetration, Contact -> Penetrated once depth
    reaches the material's pop_depth, anything -> Free when contact breaks.
    Penetrated persists while depth stays positive, so the pop re-arms only
    after the stylus leaves the organ. At most one event per call; a jump
    from Free straight past pop_depth reports ContactStart now and pops on
    the next step.
    """
    if depth <= 0.0:
        if prev_phase is Phase.FREE:
            return Phase.FREE, None
        return Phase.FREE, PhaseEvent.CONTACT_END
    if prev_phase is Phase.FREE:
        return Phase.CONTACT, PhaseEvent.CONTACT_START
    if prev_phase is Phase.CONTACT:
        if depth >= material.pop_depth:
            return Phase.PENETRATED, PhaseEvent.POP_THROUGH
        return Phase.CONTACT, None
    return Phase.PENETRATED, None


def clamp_force(raw, f_max: float) -> Vec3:
    """Scale `raw` down to magnitude f_max if it exceeds it; direction is
    preserved."""
    if not f_max > 0:
        raise ConfigError(f"force clamp must be > 0, got {f_max}")
    raw = as_vec3(raw)
    norm = _norm(raw)
    if norm <= f_max:
        return raw
    return raw * (f_max / norm)


def compute_force(material: HapticMaterial, contact: ContactState, velocity,
                  *, f_max: float = DEFAULT_F_MAX,
                  v_deadband: float = DEFAULT_V_DEADBAND) -> ForceBreakdown:
    """Evaluate the extended spring-damper model for one contact state.

    All terms are exactly zero out of contact. In contact (d > 0):

        spring   = k_eff * d * n          (k_eff scaled down after pop)
        damping  = -b * (v . n) n
        friction = -mu * N * v_t / |v_t|  (only beyond the sliding deadband)
        pop      = pop_force * n          (only in the pre-pop Contact phase)

    with N = k_eff * d the normal force magnitude. The total is the clamped
    sum; the unclamped sum is kept alongside for logging.
    """
    velocity = as_vec3(velocity)
    d = max(contact.depth, 0.0)
    if d <= 0.0:
        return ZERO_FORCE
    n = contact.normal
    nn = _norm(n)
    if abs(nn - 1.0) > _UNIT_TOL:
        raise InputError(f"contact normal must be unit length in contact, |n| = {nn}")

    k_eff = material.stiffness_k
    if contact.phase is Phase.PENETRATED:
        k_eff *= material.post_pop_stiffness_scale
    spring = k_eff * d * n
    normal_force = k_eff * d

    v_n = float(np.dot(velocity, n)) * n
    damping = -material.damping_b * v_n

    v_t = velocity - v_n
    v_t_mag = _norm(v_t)
    if v_t_mag > v_deadband and material.friction_mu > 0.0:
        friction = -material.friction_mu * normal_force * (v_t / v_t_mag)
    else:
        friction = _ZERO3

    pop = material.pop_force * n if contact.phase is Phase.CONTACT else _ZERO3

    raw_total = spring + damping + friction + pop
    total = clamp_force(raw_total, f_max)
    return ForceBreakdown(spring, damping, friction, pop, normal_force,
                          raw_total, total)
