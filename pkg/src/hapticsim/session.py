"""Session orchestration for replay runs.

A replay session folds the servo tick over a recorded trajectory while
feeding every sample to the procedure engine and injecting timed world
events (tool selections, object placements/removals) at their scheduled
times. Output is a pure function of the input files: force log, procedure
event log, stats, and scores serialize byte-identically across runs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .config import Bundle
from .errors import InputError
from .logio import (dump_line, procedure_event_to_dict, stats_to_dict,
                    tick_record_to_dict, write_jsonl)
from .procedure import (ProcedureEvent, ProcedureState, Score, ScoreEntry,
                        Scenegraph, Trajectory, Transition, apply_world_event,
                        initial_state, is_complete, observe_sample,
                        score_trajectory)
from .servo import (ServoState, SimulatedDevice, TickRecord, TickStats,
                    stats_from_records, tick)
from .haptic_core import StylusSample


@dataclass(frozen=True)
class ReplayResult:
    records: list[TickRecord]
    stats: TickStats
    procedure_events: list[ProcedureEvent]
    final_state: ProcedureState
    score: Score
    complete: bool


def run_session(bundle: Bundle, trajectory: list[tuple[float, list[float]]],
                events: list | None = None,
                duration: float | None = None) -> ReplayResult:
    """Replay a trajectory through the full pipeline with timed events.

    `events` entries are (t, "tool_select", tool) or (t, "world", WorldEvent),
    sorted by time; each fires before the first tick whose sample time
    reaches t. Duration defaults to the trajectory's span.
    """
    params = bundle.config.servo_params()
    dt = params.dt
    if duration is None:
        duration = trajectory[-1][0]
    if not duration > 0:
        raise InputError(f"duration must be > 0, got {duration}")
    device = SimulatedDevice.from_trajectory(trajectory, dt=dt)
    if device.duration < duration:
        raise InputError(f"trajectory exhausted at t={device.duration} "
                         f"(need {duration} s)")
    events = list(events or [])
    n_ticks = int(duration / dt)

    servo_state = ServoState()
    proc_state = initial_state(bundle.graph)
    records: list[TickRecord] = []
    proc_events: list[ProcedureEvent] = list(proc_state.events)
    active_tool = ""
    ev_idx = 0

    for i in range(n_ticks):
        t, pos = device.read_pose()
        while ev_idx < len(events) and events[ev_idx][0] <= t:
            _, kind, payload = events[ev_idx]
            ev_idx += 1
            if kind == "tool_select":
                active_tool = payload
            elif kind == "world":
                proc_state, new_events = apply_world_event(bundle.graph,
                                                           proc_state, payload)
                proc_events.extend(new_events)
            else:
                raise InputError(f"unknown session event kind: {kind!r}")
        sample = StylusSample(t, pos, np.zeros(3))
        servo_state, record = tick(bundle.scene, servo_state, sample, params,
                                   tick_index=i)
        device.write_force(record.force.total)
        records.append(record)
        proc_state, new_events = observe_sample(bundle.graph, proc_state,
                                                record.sample, record.contact,
                                                active_tool)
        proc_events.extend(new_events)

    stats = stats_from_records(records, dt)
    score = compute_score(bundle.graph, proc_state, records)
    return ReplayResult(records, stats, proc_events, proc_state, score,
                        is_complete(bundle.graph, proc_state))


def compute_score(graph: Scenegraph, state: ProcedureState,
                  records: list[TickRecord]) -> Score:
    """Score every completed trajectory node over its in-progress window."""
    entries: list[ScoreEntry] = []
    windows = _node_windows(state.events)
    for node in graph.nodes:
        if not isinstance(node.action, Trajectory):
            continue
        window = windows.get(node.node_id)
        if window is None:
            continue
        t_start, t_end = window
        samples = [r.sample for r in records if t_start <= r.sample.time <= t_end]
        if not samples:
            continue
        entries.append(score_trajectory(node, samples))
    return Score(tuple(entries))


def _node_windows(events) -> dict[str, tuple[float, float]]:
    start: dict[str, float] = {}
    windows: dict[str, tuple[float, float]] = {}
    for ev in events:
        if ev.transition is Transition.IN_PROGRESS:
            start.setdefault(ev.node_id, ev.time)
        elif ev.transition is Transition.DONE and ev.node_id in start:
            windows[ev.node_id] = (start[ev.node_id], ev.time)
    return windows


def write_outputs(out_dir: str, result: ReplayResult) -> dict[str, str]:
    """Write the replay artifacts; returns {artifact_name: path}."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "force_log": os.path.join(out_dir, "force_log.jsonl"),
        "procedure_log": os.path.join(out_dir, "procedure_log.jsonl"),
        "stats": os.path.join(out_dir, "stats.json"),
        "score": os.path.join(out_dir, "score.json"),
    }
    with open(paths["force_log"], "w", encoding="utf-8") as fh:
        write_jsonl(fh, (tick_record_to_dict(r) for r in result.records))
    with open(paths["procedure_log"], "w", encoding="utf-8") as fh:
        write_jsonl(fh, (procedure_event_to_dict(e) for e in result.procedure_events))
    with open(paths["stats"], "w", encoding="utf-8") as fh:
        fh.write(dump_line(stats_to_dict(result.stats)) + "\n")
    score_obj = {
        "complete": result.complete,
        "entries": [{"node_id": e.node_id, "rms_deviation": e.rms_deviation,
                     "completion_time": e.completion_time}
                    for e in result.score.entries],
        "mean_rms": result.score.mean_rms,
        "total_time": result.score.total_time,
    }
    with open(paths["score"], "w", encoding="utf-8") as fh:
        fh.write(dump_line(score_obj) + "\n")
    return paths
