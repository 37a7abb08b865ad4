"""Desk-scale haptic surgery-simulation engine.

Spring-damper contact force rendering over analytic organ shapes, a 1 kHz
servo loop with deterministic replay, a scenegraph procedure engine with a
built-in kidney-transplant flow, and a session service with a line/WebSocket
wire protocol. No VR or haptic hardware required: a simulated stylus device
and a browser operator console stand in for both.
"""

from .errors import ConfigError, HapticSimError, InputError, ProtocolError
from .geometry import (Capsule, OrganModel, Scene, Slab, Sphere,
                       closest_surface_point, scene_nearest, signed_distance)
from .haptic_core import (ContactState, ForceBreakdown, HapticMaterial, Phase,
                          PhaseEvent, StylusSample, clamp_force, compute_force,
                          estimate_velocity, resolve_contact, step_phase)
from .procedure import (ActionNode, Insert, InsertEvent, ProcedureState,
                        Remove, RemoveEvent, Scenegraph, Status, Trajectory,
                        apply_world_event, available_actions, initial_state,
                        is_complete, observe_sample, score_trajectory,
                        validate_graph)
from .servo import (ServoParams, ServoState, SimulatedDevice, TickRecord,
                    TickStats, bench_loop, run_replay, tick)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "HapticSimError", "InputError", "ProtocolError",
    "Capsule", "OrganModel", "Scene", "Slab", "Sphere",
    "closest_surface_point", "scene_nearest", "signed_distance",
    "ContactState", "ForceBreakdown", "HapticMaterial", "Phase", "PhaseEvent",
    "StylusSample", "clamp_force", "compute_force", "estimate_velocity",
    "resolve_contact", "step_phase",
    "ActionNode", "Insert", "InsertEvent", "ProcedureState", "Remove",
    "RemoveEvent", "Scenegraph", "Status", "Trajectory", "apply_world_event",
    "available_actions", "initial_state", "is_complete", "observe_sample",
    "score_trajectory", "validate_graph",
    "ServoParams", "ServoState", "SimulatedDevice", "TickRecord", "TickStats",
    "bench_loop", "run_replay", "tick",
    "__version__",
]
