"""Configuration loading: session config, scene file, procedure file.

All files are JSON; streaming inputs (trajectories, world events, logs) are
JSON Lines. Parsing collects diagnostics instead of raising so the CLI can
report every problem at once: each loader returns (value_or_None, diags),
and diagnostics carry file context.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

from .errors import ConfigError
from .geometry import Capsule, OrganModel, Scene, Slab, Sphere
from .haptic_core import (DEFAULT_ALPHA, DEFAULT_F_MAX, DEFAULT_V_DEADBAND,
                          HapticMaterial)
from .procedure import (ActionNode, Insert, InsertEvent, Remove, RemoveEvent,
                        Scenegraph, Trajectory, validate_graph)
from .servo import DEFAULT_DT, ServoParams

MODES = ("replay", "interactive", "bench")

MATERIAL_FIELDS = ("stiffness_k", "damping_b", "friction_mu", "pop_force",
                   "pop_depth", "post_pop_stiffness_scale")


@dataclass(frozen=True)
class SessionConfig:
    scene_path: str
    procedure_path: str
    dt: float = DEFAULT_DT
    alpha: float = DEFAULT_ALPHA
    v_deadband: float = DEFAULT_V_DEADBAND
    f_max: float = DEFAULT_F_MAX
    mode: str = "replay"

    def servo_params(self) -> ServoParams:
        return ServoParams(dt=self.dt, alpha=self.alpha,
                           v_deadband=self.v_deadband, f_max=self.f_max)


@dataclass(frozen=True)
class Bundle:
    """A fully validated session: config plus the parsed scene and graph."""

    config: SessionConfig
    scene: Scene
    graph: Scenegraph


def _load_json(path: str, diags: list[str]):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        diags.append(f"{path}: file not found")
    except json.JSONDecodeError as e:
        diags.append(f"{path}:{e.lineno}: invalid JSON: {e.msg}")
    return None


def parse_material(obj, context: str, diags: list[str]) -> HapticMaterial | None:
    if not isinstance(obj, dict):
        diags.append(f"{context}: material must be an object")
        return None
    unknown = sorted(set(obj) - set(MATERIAL_FIELDS))
    if unknown:
        diags.append(f"{context}: unknown material fields: {unknown}")
        return None
    try:
        return HapticMaterial(**obj)
    except (ConfigError, TypeError) as e:
        diags.append(f"{context}: {e}")
        return None


def _parse_shape(obj, context: str, diags: list[str]):
    if not isinstance(obj, dict) or "kind" not in obj:
        diags.append(f"{context}: shape must be an object with a 'kind'")
        return None
    kind = obj.get("kind")
    try:
        if kind == "sphere":
            return Sphere(center=obj["center"], radius=obj["radius"])
        if kind == "capsule":
            return Capsule(a=obj["a"], b=obj["b"], radius=obj["radius"])
        if kind == "slab":
            return Slab(point=obj["point"], normal=obj["normal"],
                        thickness=obj["thickness"])
        diags.append(f"{context}: unknown shape kind {kind!r}")
    except KeyError as e:
        diags.append(f"{context}: shape missing field {e}")
    except (ConfigError, ValueError) as e:
        diags.append(f"{context}: {e}")
    return None


def parse_scene(obj, filename: str = "<scene>") -> tuple[Scene | None, list[str]]:
    diags: list[str] = []
    if not isinstance(obj, dict) or not isinstance(obj.get("organs"), list):
        return None, [f"{filename}: scene must be an object with an 'organs' list"]
    organs = []
    for i, org in enumerate(obj["organs"]):
        ctx = f"{filename}: organs[{i}]"
        if not isinstance(org, dict):
            diags.append(f"{ctx}: must be an object")
            continue
        organ_id = org.get("organ_id")
        if not isinstance(organ_id, str) or not organ_id:
            diags.append(f"{ctx}: organ_id must be a non-empty string")
            continue
        shape = _parse_shape(org.get("shape"), f"{ctx} ({organ_id})", diags)
        material = parse_material(org.get("material"), f"{ctx} ({organ_id})", diags)
        if shape is None or material is None:
            continue
        organs.append(OrganModel(organ_id, org.get("name", organ_id), shape, material))
    if diags:
        return None, diags
    try:
        return Scene(tuple(organs)), []
    except ConfigError as e:
        return None, [f"{filename}: {e}"]


def parse_procedure(obj, filename: str = "<procedure>") -> tuple[Scenegraph | None, list[str]]:
    diags: list[str] = []
    if not isinstance(obj, dict) or not isinstance(obj.get("nodes"), list):
        return None, [f"{filename}: procedure must be an object with a 'nodes' list"]
    nodes = []
    for i, nd in enumerate(obj["nodes"]):
        ctx = f"{filename}: nodes[{i}]"
        if not isinstance(nd, dict):
            diags.append(f"{ctx}: must be an object")
            continue
        node_id = nd.get("node_id")
        kind = nd.get("kind")
        if not isinstance(node_id, str) or not node_id:
            diags.append(f"{ctx}: node_id must be a non-empty string")
            continue
        try:
            if kind == "trajectory":
                action = Trajectory(
                    waypoints=tuple(nd["waypoints"]),
                    tolerance=float(nd["tolerance"]),
                    required_tool=str(nd["required_tool"]),
                    requires_contact_with=nd.get("requires_contact_with"),
                )
            elif kind == "insert":
                action = Insert(
                    object_id=str(nd["object_id"]),
                    target_position=nd["target_position"],
                    pos_tolerance=float(nd["pos_tolerance"]),
                    target_orientation=tuple(nd.get("target_orientation",
                                                    (0.0, 0.0, 0.0, 1.0))),
                    ang_tolerance=float(nd.get("ang_tolerance", math.pi)),
                )
            elif kind == "remove":
                action = Remove(
                    object_id=str(nd["object_id"]),
                    clearance_center=nd["clearance_center"],
                    clearance_radius=float(nd["clearance_radius"]),
                )
            else:
                diags.append(f"{ctx} ({node_id}): unknown kind {kind!r}")
                continue
        except KeyError as e:
            diags.append(f"{ctx} ({node_id}): missing field {e}")
            continue
        except (ValueError, TypeError) as e:
            diags.append(f"{ctx} ({node_id}): {e}")
            continue
        nodes.append(ActionNode(node_id, action))
    edges = obj.get("edges", [])
    if not isinstance(edges, list) or not all(
            isinstance(e, (list, tuple)) and len(e) == 2 for e in edges):
        diags.append(f"{filename}: edges must be a list of [prerequisite, dependent] pairs")
        edges = []
    if diags:
        return None, diags
    graph = Scenegraph(tuple(nodes), tuple((str(a), str(b)) for a, b in edges))
    graph_diags = [f"{filename}: {d}" for d in validate_graph(graph)]
    if graph_diags:
        return None, graph_diags
    return graph, []


def parse_config(obj, filename: str = "<config>",
                 base_dir: str = ".") -> tuple[SessionConfig | None, list[str]]:
    diags: list[str] = []
    if not isinstance(obj, dict):
        return None, [f"{filename}: config must be a JSON object"]
    for key in ("scene", "procedure"):
        if not isinstance(obj.get(key), str):
            diags.append(f"{filename}: '{key}' must be a file path string")
    mode = obj.get("mode", "replay")
    if mode not in MODES:
        diags.append(f"{filename}: mode must be one of {MODES}, got {mode!r}")
    numeric = {}
    for key, default, low in (("dt", DEFAULT_DT, 0.0), ("alpha", DEFAULT_ALPHA, 0.0),
                              ("v_deadband", DEFAULT_V_DEADBAND, -1.0),
                              ("f_max", DEFAULT_F_MAX, 0.0)):
        v = obj.get(key, default)
        if not isinstance(v, (int, float)) or not math.isfinite(v) or v <= low:
            diags.append(f"{filename}: {key} must be a finite number > {low}")
        else:
            numeric[key] = float(v)
    if diags:
        return None, diags
    return SessionConfig(
        scene_path=os.path.join(base_dir, obj["scene"]),
        procedure_path=os.path.join(base_dir, obj["procedure"]),
        mode=mode,
        **numeric,
    ), []


def load_bundle(config_path: str) -> tuple[Bundle | None, list[str]]:
    """Load and validate a session config plus the files it references.

    Returns (bundle, []) on success or (None, diagnostics). A missing
    config file itself is an I/O problem and raises FileNotFoundError so the
    CLI can exit 2 instead of 1.
    """
    with open(config_path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as e:
            return None, [f"{config_path}:{e.lineno}: invalid JSON: {e.msg}"]
    config, diags = parse_config(obj, config_path,
                                 base_dir=os.path.dirname(config_path) or ".")
    if config is None:
        return None, diags
    scene_obj = _load_json(config.scene_path, diags)
    graph_obj = _load_json(config.procedure_path, diags)
    if diags:
        return None, diags
    scene, scene_diags = parse_scene(scene_obj, config.scene_path)
    graph, graph_diags = parse_procedure(graph_obj, config.procedure_path)
    diags = scene_diags + graph_diags
    if diags:
        return None, diags
    # Cross-checks: trajectory contact requirements must name scene organs.
    organ_ids = {o.organ_id for o in scene.organs}
    for node in graph.nodes:
        if isinstance(node.action, Trajectory):
            req = node.action.requires_contact_with
            if req is not None and req not in organ_ids:
                diags.append(f"{config.procedure_path}: node {node.node_id} "
                             f"requires contact with unknown organ {req!r}")
    if diags:
        return None, diags
    return Bundle(config, scene, graph), []


def load_trajectory(path: str) -> list[tuple[float, list[float]]]:
    """Trajectory input: one JSON record per line, {t, x, y, z}."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                out.append((float(rec["t"]),
                            [float(rec["x"]), float(rec["y"]), float(rec["z"])]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ConfigError(f"{path}:{lineno}: bad trajectory record: {e}") from e
    if not out:
        raise ConfigError(f"{path}: trajectory is empty")
    return out


def load_world_events(path: str) -> list:
    """Timed session events: tool selections and world insert/remove events,
    one JSON record per line."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                t = float(rec["t"])
                kind = rec["type"]
                if kind == "tool_select":
                    out.append((t, "tool_select", str(rec["tool"])))
                elif kind == "insert":
                    out.append((t, "world", InsertEvent(
                        t, str(rec["object_id"]), rec["position"],
                        tuple(rec.get("orientation", (0.0, 0.0, 0.0, 1.0))))))
                elif kind == "remove":
                    out.append((t, "world", RemoveEvent(
                        t, str(rec["object_id"]), rec["position"])))
                else:
                    raise ConfigError(f"unknown event type {kind!r}")
            except ConfigError:
                raise
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ConfigError(f"{path}:{lineno}: bad event record: {e}") from e
    out.sort(key=lambda e: e[0])
    return out
