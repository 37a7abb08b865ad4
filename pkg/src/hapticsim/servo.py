"""Fixed-rate haptic servo loop and its device abstraction.

One tick runs the whole pipeline: estimate velocity from the new pose,
resolve contact against the scene, step the pop-through phase machine for
the touched organ, evaluate the force model, clamp, and emit a TickRecord.

Replay mode is clocked logically (no sleeping) so results are a pure
function of the inputs and tests run fast; `bench_loop` is the only
wall-clock-paced path and exists to measure real-time fitness. Lateness is
measured against the absolute schedule t0 + i*dt so drift cannot hide.
"""

from __future__ import annotations

import gc
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Protocol

import numpy as np

from .errors import InputError
from .geometry import Scene, Vec3, as_vec3, signed_distance
from .haptic_core import (DEFAULT_ALPHA, DEFAULT_F_MAX, DEFAULT_V_DEADBAND,
                          ZERO_FORCE, ContactState, ForceBreakdown, Phase,
                          PhaseEvent, StylusSample, compute_force,
                          estimate_velocity, resolve_contact, step_phase)

DEFAULT_DT = 0.001  # 1 kHz servo rate


class DeviceAdapter(Protocol):
    """Behavioral contract for a stylus device.

    `read_pose` returns (time_s, position_m); times from simulated devices
    advance by exactly dt per call. `write_force` receives the clamped force
    vector and returns an acknowledgement. Real hardware adapters implement
    this same surface; none ship here.
    """

    max_force: float
    workspace_bounds: tuple[Vec3, Vec3]

    def read_pose(self) -> tuple[float, Vec3]: ...

    def write_force(self, force: Vec3) -> bool: ...


_DEFAULT_BOUNDS = (np.array([-0.2, -0.2, -0.2]), np.array([0.2, 0.2, 0.2]))


class SimulatedDevice:
    """Hardware-free stylus fed by a recorded trajectory or a parametric
    path. Emits poses at exactly dt spacing, linearly interpolating recorded
    waypoints."""

    def __init__(self, dt: float = DEFAULT_DT, *,
                 trajectory: list[tuple[float, Vec3]] | None = None,
                 path: Callable[[float], Vec3] | None = None,
                 duration: float = math.inf,
                 max_force: float = DEFAULT_F_MAX):
        if (trajectory is None) == (path is None):
            raise InputError("provide exactly one of trajectory or path")
        if not dt > 0:
            raise InputError(f"dt must be > 0, got {dt}")
        self.dt = dt
        self.max_force = max_force
        self.workspace_bounds = _DEFAULT_BOUNDS
        self._tick = 0
        self.last_force: Vec3 | None = None
        if trajectory is not None:
            if len(trajectory) < 1:
                raise InputError("trajectory must contain at least one sample")
            self._times = np.array([t for t, _ in trajectory], dtype=np.float64)
            if np.any(np.diff(self._times) <= 0):
                raise InputError("trajectory times must strictly increase")
            self._points = np.array([as_vec3(p) for _, p in trajectory])
            self._path = None
            self.duration = float(self._times[-1])
        else:
            self._times = None
            self._points = None
            self._path = path
            self.duration = duration

    @classmethod
    def from_trajectory(cls, trajectory, dt: float = DEFAULT_DT) -> "SimulatedDevice":
        return cls(dt, trajectory=trajectory)

    @classmethod
    def from_path(cls, path: Callable[[float], Vec3], dt: float = DEFAULT_DT,
                  duration: float = math.inf) -> "SimulatedDevice":
        return cls(dt, path=path, duration=duration)

    def read_pose(self) -> tuple[float, Vec3]:
        t = self._tick * self.dt
        if t > self.duration:
            raise InputError(f"trajectory exhausted at t={self.duration}")
        self._tick += 1
        if self._path is not None:
            return t, as_vec3(self._path(t))
        idx = int(np.searchsorted(self._times, t, side="right"))
        if idx == 0:
            return t, as_vec3(self._points[0])
        if idx >= len(self._times):
            return t, as_vec3(self._points[-1])
        t0, t1 = self._times[idx - 1], self._times[idx]
        w = (t - t0) / (t1 - t0)
        return t, as_vec3((1.0 - w) * self._points[idx - 1] + w * self._points[idx])

    def write_force(self, force: Vec3) -> bool:
        self.last_force = as_vec3(force)
        return True


@dataclass(frozen=True)
class ServoState:
    """Carried between ticks: previous pose, filtered velocity, and the
    phase memory per organ (so pop-through re-arms only after an organ's own
    contact breaks)."""

    prev_position: Vec3 | None = None
    filtered_velocity: Vec3 = field(default_factory=lambda: np.zeros(3))
    phases: tuple[tuple[str, Phase], ...] = ()

    def phase_of(self, organ_id: str) -> Phase:
        for oid, ph in self.phases:
            if oid == organ_id:
                return ph
        return Phase.FREE


@dataclass(frozen=True)
class TickRecord:
    """Everything one servo tick produced, for logging and replay checks."""

    tick: int
    sample: StylusSample
    contact: ContactState
    force: ForceBreakdown
    event: PhaseEvent | None
    lateness: float = 0.0


@dataclass(frozen=True)
class TickStats:
    """Timing and clamping summary over a run."""

    ticks: int
    deadline_misses: int
    p50_lateness: float
    p99_lateness: float
    max_lateness: float
    clamped_count: int

    @property
    def miss_rate(self) -> float:
        return self.deadline_misses / self.ticks if self.ticks else 0.0


@dataclass(frozen=True)
class ServoParams:
    dt: float = DEFAULT_DT
    alpha: float = DEFAULT_ALPHA
    v_deadband: float = DEFAULT_V_DEADBAND
    f_max: float = DEFAULT_F_MAX

    def __post_init__(self):
        if not self.dt > 0:
            raise InputError(f"dt must be > 0, got {self.dt}")


def tick(scene: Scene, state: ServoState, sample: StylusSample,
         params: ServoParams, tick_index: int = 0,
         lateness: float = 0.0) -> tuple[ServoState, TickRecord]:
    """One pure servo step. `sample.velocity` is ignored on input; the
    filtered estimate computed here is embedded in the emitted record."""
    if state.prev_position is None:
        velocity = np.zeros(3)
    else:
        velocity = estimate_velocity(state.filtered_velocity, state.prev_position,
                                     sample.position, params.dt, params.alpha)

    contact = resolve_contact(scene, sample.position)

    phases = dict(state.phases)
    event: PhaseEvent | None = None
    if contact.organ_id is not None:
        material = scene.organ(contact.organ_id).material
        new_phase, event = step_phase(state.phase_of(contact.organ_id),
                                      contact.depth, material)
        phases[contact.organ_id] = new_phase
        contact = replace(contact, phase=new_phase)
    # Organs no longer touched fall back to FREE; if nothing else produced an
    # event this tick, the first such break is reported as the contact end.
    for oid in list(phases):
        if oid != contact.organ_id and phases[oid] is not Phase.FREE:
            if signed_distance(scene.organ(oid).shape, sample.position) >= 0.0:
                del phases[oid]
                if event is None:
                    event = PhaseEvent.CONTACT_END
    phases = {k: v for k, v in phases.items() if v is not Phase.FREE}

    if contact.organ_id is not None:
        material = scene.organ(contact.organ_id).material
        force = compute_force(material, contact, velocity,
                              f_max=params.f_max, v_deadband=params.v_deadband)
    else:
        force = ZERO_FORCE

    out_sample = StylusSample(sample.time, sample.position, velocity)
    new_state = ServoState(prev_position=sample.position,
                           filtered_velocity=velocity,
                           phases=tuple(sorted(phases.items(),
                                               key=lambda kv: kv[0])))
    record = TickRecord(tick_index, out_sample, contact, force, event, lateness)
    return new_state, record


def stats_from_records(records: Iterable[TickRecord], dt: float) -> TickStats:
    lateness = np.array([r.lateness for r in records], dtype=np.float64)
    clamped = sum(1 for r in records if r.force.clamped)
    if lateness.size == 0:
        return TickStats(0, 0, 0.0, 0.0, 0.0, 0)
    return TickStats(
        ticks=int(lateness.size),
        deadline_misses=int(np.sum(lateness > dt)),
        p50_lateness=float(np.percentile(lateness, 50)),
        p99_lateness=float(np.percentile(lateness, 99)),
        max_lateness=float(np.max(lateness)),
        clamped_count=clamped,
    )


def run_replay(scene: Scene, device: SimulatedDevice, dt: float,
               duration: float,
               params: ServoParams | None = None) -> tuple[list[TickRecord], TickStats]:
    """Deterministic logical-clock replay: exactly floor(duration/dt) ticks,
    a pure function of (scene, trajectory, params)."""
    if not duration > 0:
        raise InputError(f"duration must be > 0, got {duration}")
    if not dt > 0:
        raise InputError(f"dt must be > 0, got {dt}")
    if device.duration < duration:
        raise InputError(f"trajectory exhausted at t={device.duration} "
                         f"(need {duration} s)")
    params = params or ServoParams(dt=dt)
    n_ticks = int(duration / dt)
    state = ServoState()
    records: list[TickRecord] = []
    for i in range(n_ticks):
        t, pos = device.read_pose()
        sample = StylusSample(t, pos, np.zeros(3))
        state, record = tick(scene, state, sample, params, tick_index=i)
        device.write_force(record.force.total)
        records.append(record)
    return records, stats_from_records(records, dt)


def bench_loop(scene: Scene, device: SimulatedDevice, dt: float,
               duration: float, params: ServoParams | None = None,
               keep_records: bool = False) -> TickStats | tuple[TickStats, list[TickRecord]]:
    """Wall-clock-paced loop: each tick is scheduled at t0 + i*dt, lateness
    is completion time minus that slot, and a miss is lateness > dt.

    Pacing spins rather than sleeping for sub-2ms gaps (container sleep
    overshoot is of the same order as a 1 kHz budget) and pauses the cyclic
    garbage collector for the duration, as a real servo thread would.
    """
    if not duration > 0:
        raise InputError(f"duration must be > 0, got {duration}")
    params = params or ServoParams(dt=dt)
    n_ticks = int(duration / dt)
    state = ServoState()
    records: list[TickRecord] = []
    lateness_list = np.empty(n_ticks)
    clamped = 0
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        t0 = time.perf_counter()
        for i in range(n_ticks):
            scheduled = t0 + i * dt
            _spin_until(scheduled)
            t, pos = device.read_pose()
            sample = StylusSample(t, pos, np.zeros(3))
            state, record = tick(scene, state, sample, params, tick_index=i)
            device.write_force(record.force.total)
            lateness = time.perf_counter() - scheduled
            lateness_list[i] = lateness
            if record.force.clamped:
                clamped += 1
            if keep_records:
                records.append(replace(record, lateness=lateness))
    finally:
        if gc_was_enabled:
            gc.enable()
    stats = TickStats(
        ticks=n_ticks,
        deadline_misses=int(np.sum(lateness_list > dt)),
        p50_lateness=float(np.percentile(lateness_list, 50)),
        p99_lateness=float(np.percentile(lateness_list, 99)),
        max_lateness=float(np.max(lateness_list)),
        clamped_count=clamped,
    )
    if keep_records:
        return stats, records
    return stats


def _spin_until(deadline: float) -> None:
    # Sleep only for coarse gaps; busy-wait the final stretch. Linux timer
    # slack overshoots by more than a 1 ms tick budget under load.
    while True:
        remaining = deadline - time.perf_counter()
        if remaining <= 0:
            return
        if remaining > 0.002:
            time.sleep(remaining - 0.002)
