#!/usr/bin/env python3
"""Regenerate the shipped kidney-transplant bundle under src/hapticsim/data/.

Produces the scene, the procedure graph, a scripted stylus trajectory that
completes every trajectory node, the timed tool/world events that complete
the insert/remove nodes, and the replay/interactive session configs. The
construction is fully deterministic; run it after changing any layout
constant below and commit the regenerated files.
"""

import json
import math
import os
import sys

DATA_DIR = os.path.join(os.path.dirname(__file__), "..", "src", "hapticsim", "data")

# Operative-field layout (meters). The abdominal wall is a slab whose faces
# sit at z = 0.09 and 0.11; the vessels and bladder lie beneath it.
WALL_Z_TOP = 0.11
WALL = {"kind": "slab", "point": [0.0, 0.0, 0.10], "normal": [0.0, 0.0, 1.0],
        "thickness": 0.02}
ARTERY = {"kind": "capsule", "a": [-0.05, 0.03, 0.03], "b": [0.05, 0.03, 0.03],
          "radius": 0.005}
VEIN = {"kind": "capsule", "a": [-0.05, 0.045, 0.03], "b": [0.05, 0.045, 0.03],
        "radius": 0.006}
BLADDER = {"kind": "sphere", "center": [-0.05, -0.04, 0.03], "radius": 0.025}
FOSSA = {"kind": "sphere", "center": [0.06, -0.03, 0.02], "radius": 0.03}

TRACE_DEPTH = 0.001      # how far trajectory waypoints sit beneath a surface
WALL_TRACE_DEPTH = 0.002

SCENE = {
    "organs": [
        {
            "organ_id": "abdominal_wall",
            "name": "Abdominal Wall",
            "shape": WALL,
            "material": {"stiffness_k": 600.0, "damping_b": 2.0,
                         "friction_mu": 0.4, "pop_force": 0.9,
                         "pop_depth": 0.0015, "post_pop_stiffness_scale": 0.3},
        },
        {
            "organ_id": "external_iliac_artery",
            "name": "External Iliac Artery",
            "shape": ARTERY,
            "material": {"stiffness_k": 300.0, "damping_b": 1.2,
                         "friction_mu": 0.2, "pop_force": 0.4,
                         "pop_depth": 0.002, "post_pop_stiffness_scale": 0.35},
        },
        {
            "organ_id": "external_iliac_vein",
            "name": "External Iliac Vein",
            "shape": VEIN,
            "material": {"stiffness_k": 200.0, "damping_b": 1.0,
                         "friction_mu": 0.2, "pop_force": 0.3,
                         "pop_depth": 0.002, "post_pop_stiffness_scale": 0.35},
        },
        {
            "organ_id": "bladder",
            "name": "Bladder",
            "shape": BLADDER,
            "material": {"stiffness_k": 150.0, "damping_b": 0.8,
                         "friction_mu": 0.25, "pop_force": 0.35,
                         "pop_depth": 0.0025, "post_pop_stiffness_scale": 0.4},
        },
        {
            "organ_id": "iliac_fossa",
            "name": "Iliac Fossa",
            "shape": FOSSA,
            "material": {"stiffness_k": 400.0, "damping_b": 1.5,
                         "friction_mu": 0.3, "pop_force": 0.0,
                         "pop_depth": 0.005, "post_pop_stiffness_scale": 1.0},
        },
    ]
}

# Trajectory-node waypoints, derived from the shapes above.
WALL_TRACE_Z = WALL_Z_TOP - WALL_TRACE_DEPTH
INCISION_WPS = [[-0.03, 0.0, WALL_TRACE_Z], [0.0, 0.0, WALL_TRACE_Z],
                [0.03, 0.0, WALL_TRACE_Z]]
CLOSE_WPS = list(reversed(INCISION_WPS))

ARTERY_TRACE_Z = ARTERY["a"][2] + ARTERY["radius"] - TRACE_DEPTH
ARTERY_WPS = [[-0.012, 0.03, ARTERY_TRACE_Z], [0.0, 0.03, ARTERY_TRACE_Z],
              [0.012, 0.03, ARTERY_TRACE_Z]]

VEIN_TRACE_Z = VEIN["a"][2] + VEIN["radius"] - TRACE_DEPTH
VEIN_WPS = [[-0.012, 0.045, VEIN_TRACE_Z], [0.0, 0.045, VEIN_TRACE_Z],
            [0.012, 0.045, VEIN_TRACE_Z]]


def bladder_arc(theta):
    cx, cy, cz = BLADDER["center"]
    r = BLADDER["radius"] - TRACE_DEPTH
    return [cx + r * math.sin(theta), cy, cz + r * math.cos(theta)]


BLADDER_WPS = [bladder_arc(t) for t in (-0.35, 0.0, 0.35)]

KIDNEY_TARGET = [0.06, -0.03, 0.06]
RETRACTOR_TARGET = [0.0, -0.02, 0.09]
CLAMP_TARGET = [0.0, 0.03, 0.05]
IDENTITY_Q = [0.0, 0.0, 0.0, 1.0]

PROCEDURE = {
    "notes": ("Retractors and clamps are placed before the kidney; the "
              "clinical ordering of those setup steps is an authoring "
              "assumption, not a constraint inherent to the engine."),
    "nodes": [
        {"node_id": "incision_abdomen", "kind": "trajectory",
         "waypoints": INCISION_WPS, "tolerance": 0.003,
         "required_tool": "scalpel", "requires_contact_with": "abdominal_wall"},
        {"node_id": "insert_retractors", "kind": "insert",
         "object_id": "retractors", "target_position": RETRACTOR_TARGET,
         "pos_tolerance": 0.01, "target_orientation": IDENTITY_Q,
         "ang_tolerance": 0.5},
        {"node_id": "insert_clamps", "kind": "insert", "object_id": "clamps",
         "target_position": CLAMP_TARGET, "pos_tolerance": 0.01,
         "target_orientation": IDENTITY_Q, "ang_tolerance": 0.5},
        {"node_id": "insert_kidney", "kind": "insert", "object_id": "kidney",
         "target_position": KIDNEY_TARGET, "pos_tolerance": 0.01,
         "target_orientation": IDENTITY_Q, "ang_tolerance": 0.3},
        {"node_id": "anastomose_renal_artery_to_external_iliac_artery",
         "kind": "trajectory", "waypoints": ARTERY_WPS, "tolerance": 0.0025,
         "required_tool": "needle",
         "requires_contact_with": "external_iliac_artery"},
        {"node_id": "anastomose_renal_vein_to_external_iliac_vein",
         "kind": "trajectory", "waypoints": VEIN_WPS, "tolerance": 0.0025,
         "required_tool": "needle",
         "requires_contact_with": "external_iliac_vein"},
        {"node_id": "anastomose_ureter_to_bladder", "kind": "trajectory",
         "waypoints": BLADDER_WPS, "tolerance": 0.0025,
         "required_tool": "needle", "requires_contact_with": "bladder"},
        {"node_id": "remove_clamps", "kind": "remove", "object_id": "clamps",
         "clearance_center": CLAMP_TARGET, "clearance_radius": 0.12},
        {"node_id": "remove_retractors", "kind": "remove",
         "object_id": "retractors", "clearance_center": RETRACTOR_TARGET,
         "clearance_radius": 0.12},
        {"node_id": "close_abdomen", "kind": "trajectory",
         "waypoints": CLOSE_WPS, "tolerance": 0.003,
         "required_tool": "suture", "requires_contact_with": "abdominal_wall"},
    ],
    "edges": [
        ["incision_abdomen", "insert_retractors"],
        ["incision_abdomen", "insert_clamps"],
        ["insert_retractors", "insert_kidney"],
        ["insert_clamps", "insert_kidney"],
        ["insert_kidney", "anastomose_renal_artery_to_external_iliac_artery"],
        ["insert_kidney", "anastomose_renal_vein_to_external_iliac_vein"],
        ["insert_kidney", "anastomose_ureter_to_bladder"],
        ["anastomose_renal_artery_to_external_iliac_artery", "remove_clamps"],
        ["anastomose_renal_artery_to_external_iliac_artery", "remove_retractors"],
        ["anastomose_renal_vein_to_external_iliac_vein", "remove_clamps"],
        ["anastomose_renal_vein_to_external_iliac_vein", "remove_retractors"],
        ["anastomose_ureter_to_bladder", "remove_clamps"],
        ["anastomose_ureter_to_bladder", "remove_retractors"],
        ["remove_clamps", "close_abdomen"],
        ["remove_retractors", "close_abdomen"],
    ],
}


def _above(p, z):
    return [p[0], p[1], z]


# Scripted stylus path: (time, position) vertices, linearly interpolated by
# the simulated device. Traces pass through each waypoint well inside
# tolerance; inter-site transfers stay clear of every other trace target.
TRAJECTORY = [
    (0.0, [-0.03, 0.0, 0.14]),
    (0.8, _above(INCISION_WPS[0], 0.112)),
    (1.0, INCISION_WPS[0]),
    (1.6, INCISION_WPS[1]),
    (2.2, INCISION_WPS[2]),
    (2.5, _above(INCISION_WPS[2], 0.14)),
    (3.0, _above(ARTERY_WPS[0], 0.06)),
    (3.4, ARTERY_WPS[0]),
    (4.0, ARTERY_WPS[1]),
    (4.6, ARTERY_WPS[2]),
    (4.9, _above(ARTERY_WPS[2], 0.06)),
    (5.1, _above(VEIN_WPS[0], 0.06)),
    (5.5, VEIN_WPS[0]),
    (6.1, VEIN_WPS[1]),
    (6.7, VEIN_WPS[2]),
    (7.0, _above(VEIN_WPS[2], 0.07)),
    (7.4, _above(BLADDER_WPS[0], 0.08)),
    (7.7, BLADDER_WPS[0]),
    (8.1, BLADDER_WPS[1]),
    (8.5, BLADDER_WPS[2]),
    (8.7, _above(BLADDER_WPS[2], 0.09)),
    (9.0, _above(CLOSE_WPS[0], 0.14)),
    (9.3, CLOSE_WPS[0]),
    (9.9, CLOSE_WPS[1]),
    (10.5, CLOSE_WPS[2]),
    (10.8, _above(CLOSE_WPS[2], 0.14)),
    (11.0, [-0.03, 0.0, 0.15]),
]

PARKED = [0.2, 0.2, 0.2]  # outside every clearance region

EVENTS = [
    {"t": 0.0, "type": "tool_select", "tool": "scalpel"},
    {"t": 2.6, "type": "insert", "object_id": "retractors",
     "position": RETRACTOR_TARGET, "orientation": IDENTITY_Q},
    {"t": 2.7, "type": "insert", "object_id": "clamps",
     "position": CLAMP_TARGET, "orientation": IDENTITY_Q},
    {"t": 2.8, "type": "insert", "object_id": "kidney",
     "position": KIDNEY_TARGET, "orientation": IDENTITY_Q},
    {"t": 2.9, "type": "tool_select", "tool": "needle"},
    {"t": 8.8, "type": "remove", "object_id": "clamps", "position": PARKED},
    {"t": 8.9, "type": "remove", "object_id": "retractors", "position": PARKED},
    {"t": 9.0, "type": "tool_select", "tool": "suture"},
]

CONFIG_REPLAY = {
    "scene": "scene_kidney_transplant.json",
    "procedure": "procedure_kidney_transplant.json",
    "dt": 0.001,
    "alpha": 0.2,
    "v_deadband": 1e-4,
    "f_max": 3.3,
    "mode": "replay",
}

CONFIG_INTERACTIVE = dict(CONFIG_REPLAY, mode="interactive")


def main() -> int:
    os.makedirs(DATA_DIR, exist_ok=True)

    def write_json(name, obj):
        with open(os.path.join(DATA_DIR, name), "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2)
            fh.write("\n")

    def write_jsonl(name, records):
        with open(os.path.join(DATA_DIR, name), "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec, separators=(",", ":")))
                fh.write("\n")

    write_json("scene_kidney_transplant.json", SCENE)
    write_json("procedure_kidney_transplant.json", PROCEDURE)
    write_json("config_replay.json", CONFIG_REPLAY)
    write_json("config_interactive.json", CONFIG_INTERACTIVE)
    write_jsonl("trajectory_kidney_transplant.jsonl",
                ({"t": t, "x": p[0], "y": p[1], "z": p[2]} for t, p in TRAJECTORY))
    write_jsonl("events_kidney_transplant.jsonl", EVENTS)

    # Sanity: the bundle must validate and the replay must complete.
    sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))
    from hapticsim.config import load_bundle, load_trajectory, load_world_events
    from hapticsim.session import run_session

    bundle, diags = load_bundle(os.path.join(DATA_DIR, "config_replay.json"))
    if diags:
        print("\n".join(diags), file=sys.stderr)
        return 1
    result = run_session(
        bundle,
        load_trajectory(os.path.join(DATA_DIR, "trajectory_kidney_transplant.jsonl")),
        load_world_events(os.path.join(DATA_DIR, "events_kidney_transplant.jsonl")),
    )
    print(f"ticks: {result.stats.ticks}, complete: {result.complete}")
    for entry in result.score.entries:
        print(f"  {entry.node_id}: rms {entry.rms_deviation * 1000:.3f} mm, "
              f"{entry.completion_time:.2f} s")
    if not result.complete:
        done = {nid: st.value for nid, st in result.final_state.statuses}
        print(f"INCOMPLETE: {done}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
