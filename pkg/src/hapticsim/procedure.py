"""Scenegraph procedure engine: a DAG of surgical actions with per-node
status tracking, ordered unlocking, and trajectory scoring.

Three action kinds cover the procedural vocabulary: Trajectory (guided
tool paths such as cutting and suturing), Insert (placing an object at a
target pose), and Remove (clearing an object out of a region). Nodes unlock
when all prerequisite nodes are done; parallel branches stay unordered.

State transitions are pure: every operation returns a new ProcedureState
plus the events it generated, and the state is exactly reconstructable from
its event log.
"""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .geometry import Vec3, as_vec3
from .haptic_core import ContactState, StylusSample


@dataclass(frozen=True)
class Trajectory:
    """Follow waypoints in order with a named tool, each hit within
    `tolerance`; optionally only while touching a specific organ."""

    waypoints: tuple[Vec3, ...]
    tolerance: float
    required_tool: str
    requires_contact_with: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "waypoints",
                           tuple(as_vec3(w) for w in self.waypoints))


@dataclass(frozen=True)
class Insert:
    """Place `object_id` within positional and angular tolerance of a
    target pose. Orientations are unit quaternions (x, y, z, w)."""

    object_id: str
    target_position: Vec3
    pos_tolerance: float
    target_orientation: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 1.0)
    ang_tolerance: float = math.pi

    def __post_init__(self):
        object.__setattr__(self, "target_position", as_vec3(self.target_position))
        object.__setattr__(self, "target_orientation",
                           tuple(float(c) for c in self.target_orientation))


@dataclass(frozen=True)
class Remove:
    """Move `object_id` out of the clearance sphere."""

    object_id: str
    clearance_center: Vec3
    clearance_radius: float

    def __post_init__(self):
        object.__setattr__(self, "clearance_center", as_vec3(self.clearance_center))


Action = Trajectory | Insert | Remove


@dataclass(frozen=True)
class ActionNode:
    node_id: str
    action: Action


@dataclass(frozen=True)
class Scenegraph:
    """Nodes plus (prerequisite -> dependent) edges. Must be acyclic; run
    validate_graph before trusting one from a file."""

    nodes: tuple[ActionNode, ...]
    edges: tuple[tuple[str, str], ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple((str(a), str(b)) for a, b in self.edges))

    def node(self, node_id: str) -> ActionNode:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise InputError(f"unknown node_id: {node_id}")

    def prerequisites(self, node_id: str) -> list[str]:
        return [a for a, b in self.edges if b == node_id]

    def dependents(self, node_id: str) -> list[str]:
        return [b for a, b in self.edges if a == node_id]


class Status(enum.Enum):
    LOCKED = "locked"
    AVAILABLE = "available"
    IN_PROGRESS = "in_progress"
    DONE = "done"


class Transition(enum.Enum):
    AVAILABLE = "available"
    IN_PROGRESS = "in_progress"
    WAYPOINT = "waypoint"
    DONE = "done"
    WARNING = "warning"


@dataclass(frozen=True)
class ProcedureEvent:
    time: float
    node_id: str
    transition: Transition
    detail: int | str | None = None


@dataclass(frozen=True)
class InsertEvent:
    time: float
    object_id: str
    position: Vec3
    orientation: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "position", as_vec3(self.position))
        object.__setattr__(self, "orientation",
                           tuple(float(c) for c in self.orientation))


@dataclass(frozen=True)
class RemoveEvent:
    time: float
    object_id: str
    position: Vec3

    def __post_init__(self):
        object.__setattr__(self, "position", as_vec3(self.position))


WorldEvent = InsertEvent | RemoveEvent


@dataclass(frozen=True)
class ProcedureState:
    """Per-node status, trajectory progress, and the append-only event log."""

    statuses: tuple[tuple[str, Status], ...]
    waypoint_index: tuple[tuple[str, int], ...]
    events: tuple[ProcedureEvent, ...] = ()

    def status(self, node_id: str) -> Status:
        for nid, st in self.statuses:
            if nid == node_id:
                return st
        raise InputError(f"unknown node in state: {node_id}")

    def next_waypoint(self, node_id: str) -> int:
        for nid, idx in self.waypoint_index:
            if nid == node_id:
                return idx
        return 0

    def _as_dicts(self) -> tuple[dict[str, Status], dict[str, int]]:
        return dict(self.statuses), dict(self.waypoint_index)


def initial_state(graph: Scenegraph) -> ProcedureState:
    """Fresh state: roots available, everything else locked."""
    statuses = {}
    for node in graph.nodes:
        statuses[node.node_id] = (Status.AVAILABLE if not graph.prerequisites(node.node_id)
                                  else Status.LOCKED)
    return ProcedureState(
        statuses=tuple(sorted(statuses.items())),
        waypoint_index=(),
    )


def validate_graph(graph: Scenegraph) -> list[str]:
    """Diagnostics for every invariant violation; empty means valid."""
    diags: list[str] = []
    ids = [n.node_id for n in graph.nodes]
    seen: set[str] = set()
    for nid in ids:
        if nid in seen:
            diags.append(f"duplicate node_id: {nid}")
        seen.add(nid)
    for a, b in graph.edges:
        for end in (a, b):
            if end not in seen:
                diags.append(f"edge references unknown node: {a} -> {b}")
                break
    for node in graph.nodes:
        act = node.action
        if isinstance(act, Trajectory):
            if len(act.waypoints) < 2:
                diags.append(f"trajectory node {node.node_id} needs >= 2 waypoints")
            if not act.tolerance > 0:
                diags.append(f"trajectory node {node.node_id} tolerance must be > 0")
        elif isinstance(act, Insert):
            if not act.pos_tolerance > 0:
                diags.append(f"insert node {node.node_id} pos_tolerance must be > 0")
            if not act.ang_tolerance > 0:
                diags.append(f"insert node {node.node_id} ang_tolerance must be > 0")
        elif isinstance(act, Remove):
            if not act.clearance_radius > 0:
                diags.append(f"remove node {node.node_id} clearance_radius must be > 0")
    for cycle in _find_cycles(ids, graph.edges):
        diags.append(f"cycle detected: {cycle}")
    return diags


def _find_cycles(ids: list[str], edges) -> list[list[str]]:
    """Nontrivial strongly connected components, one sorted list per cycle."""
    adj: dict[str, list[str]] = {i: [] for i in ids}
    for a, b in edges:
        if a in adj and b in adj:
            adj[a].append(b)
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    sccs: list[list[str]] = []
    counter = [0]

    def strongconnect(v: str):
        # Iterative Tarjan to survive deep graphs.
        work = [(v, iter(adj[v]))]
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        on_stack.add(v)
        while work:
            node, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(adj[w])))
                    advanced = True
                    break
                elif w in on_stack:
                    low[node] = min(low[node], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == node:
                        break
                if len(comp) > 1 or node in adj[node]:
                    sccs.append(sorted(comp))

    for v in sorted(adj):
        if v not in index:
            strongconnect(v)
    return sorted(sccs)


def topological_index(graph: Scenegraph) -> dict[str, int]:
    """Deterministic topological numbering (Kahn, ties by node_id)."""
    ids = [n.node_id for n in graph.nodes]
    indegree = {i: 0 for i in ids}
    adj: dict[str, list[str]] = {i: [] for i in ids}
    for a, b in graph.edges:
        adj[a].append(b)
        indegree[b] += 1
    ready = [i for i in ids if indegree[i] == 0]
    heapq.heapify(ready)
    order: dict[str, int] = {}
    while ready:
        nid = heapq.heappop(ready)
        order[nid] = len(order)
        for dep in adj[nid]:
            indegree[dep] -= 1
            if indegree[dep] == 0:
                heapq.heappush(ready, dep)
    if len(order) != len(ids):
        raise InputError("graph contains a cycle; run validate_graph")
    return order


def available_actions(graph: Scenegraph, state: ProcedureState) -> list[str]:
    """Non-done nodes whose prerequisites are all done, in deterministic
    (topological index, node_id) order."""
    statuses = dict(state.statuses)
    for nid in statuses:
        graph.node(nid)  # raises on unknown node
    topo = topological_index(graph)
    out = []
    for node in graph.nodes:
        st = statuses.get(node.node_id)
        if st is None:
            raise InputError(f"state missing node: {node.node_id}")
        if st is Status.DONE:
            continue
        if all(statuses[p] is Status.DONE for p in graph.prerequisites(node.node_id)):
            out.append(node.node_id)
    out.sort(key=lambda nid: (topo[nid], nid))
    return out


def is_complete(graph: Scenegraph, state: ProcedureState) -> bool:
    statuses = dict(state.statuses)
    return all(statuses.get(n.node_id) is Status.DONE for n in graph.nodes)


def _complete_node(graph: Scenegraph, statuses: dict[str, Status], time: float,
                   node_id: str, events: list[ProcedureEvent]) -> None:
    """Mark done and unlock any dependent whose last prerequisite this was."""
    statuses[node_id] = Status.DONE
    events.append(ProcedureEvent(time, node_id, Transition.DONE))
    for dep in sorted(graph.dependents(node_id)):
        if statuses[dep] is Status.LOCKED and all(
                statuses[p] is Status.DONE for p in graph.prerequisites(dep)):
            statuses[dep] = Status.AVAILABLE
            events.append(ProcedureEvent(time, dep, Transition.AVAILABLE))


def observe_sample(graph: Scenegraph, state: ProcedureState,
                   sample: StylusSample, contact: ContactState | None,
                   active_tool: str) -> tuple[ProcedureState, list[ProcedureEvent]]:
    """Feed one stylus sample to every workable trajectory node.

    A node advances only on its next waypoint (in-order hits; out-of-order
    proximity is ignored), only with the required tool, and only while the
    contact requirement holds when one is set.
    """
    statuses, wp_index = state._as_dicts()
    events: list[ProcedureEvent] = []
    topo = topological_index(graph)
    for node in sorted(graph.nodes, key=lambda n: (topo[n.node_id], n.node_id)):
        act = node.action
        if not isinstance(act, Trajectory):
            continue
        st = statuses[node.node_id]
        if st not in (Status.AVAILABLE, Status.IN_PROGRESS):
            continue
        if act.required_tool != active_tool:
            continue
        if act.requires_contact_with is not None:
            if contact is None or contact.organ_id != act.requires_contact_with:
                continue
        idx = wp_index.get(node.node_id, 0)
        node_events: list[ProcedureEvent] = []
        while idx < len(act.waypoints) and (
                float(np.linalg.norm(sample.position - act.waypoints[idx]))
                <= act.tolerance):
            idx += 1
            node_events.append(ProcedureEvent(sample.time, node.node_id,
                                              Transition.WAYPOINT, idx))
        if not node_events:
            continue
        wp_index[node.node_id] = idx
        if st is Status.AVAILABLE:
            statuses[node.node_id] = Status.IN_PROGRESS
            events.append(ProcedureEvent(sample.time, node.node_id,
                                         Transition.IN_PROGRESS))
        events.extend(node_events)
        if idx >= len(act.waypoints):
            _complete_node(graph, statuses, sample.time, node.node_id, events)
    if not events:
        return state, []
    new_state = ProcedureState(
        statuses=tuple(sorted(statuses.items())),
        waypoint_index=tuple(sorted(wp_index.items())),
        events=state.events + tuple(events),
    )
    return new_state, events


def quaternion_angle(q1, q2) -> float:
    """Rotation angle in radians between two unit quaternions."""
    dot = abs(sum(a * b for a, b in zip(q1, q2)))
    return 2.0 * math.acos(min(1.0, dot))


def apply_world_event(graph: Scenegraph, state: ProcedureState,
                      event: WorldEvent) -> tuple[ProcedureState, list[ProcedureEvent]]:
    """Complete insert/remove nodes matching a world event.

    An available Insert node completes when the named object's pose lands
    within both tolerances; an available Remove node completes when the
    object's position leaves the clearance sphere. Events naming an object
    no node references are ignored with a warning event.
    """
    statuses, wp_index = state._as_dicts()
    events: list[ProcedureEvent] = []
    referenced = False
    topo = topological_index(graph)
    for node in sorted(graph.nodes, key=lambda n: (topo[n.node_id], n.node_id)):
        act = node.action
        if isinstance(event, InsertEvent) and isinstance(act, Insert) \
                and act.object_id == event.object_id:
            referenced = True
            if statuses[node.node_id] is not Status.AVAILABLE:
                continue
            pos_err = float(np.linalg.norm(event.position - act.target_position))
            ang_err = quaternion_angle(event.orientation, act.target_orientation)
            if pos_err <= act.pos_tolerance and ang_err <= act.ang_tolerance:
                _complete_node(graph, statuses, event.time, node.node_id, events)
        elif isinstance(event, RemoveEvent) and isinstance(act, Remove) \
                and act.object_id == event.object_id:
            referenced = True
            if statuses[node.node_id] is not Status.AVAILABLE:
                continue
            dist = float(np.linalg.norm(event.position - act.clearance_center))
            if dist > act.clearance_radius:
                _complete_node(graph, statuses, event.time, node.node_id, events)
    if not referenced:
        events.append(ProcedureEvent(event.time, "", Transition.WARNING,
                                     f"no node references object {event.object_id!r}"))
    if not events:
        return state, []
    new_state = ProcedureState(
        statuses=tuple(sorted(statuses.items())),
        waypoint_index=tuple(sorted(wp_index.items())),
        events=state.events + tuple(events),
    )
    return new_state, events


def rebuild_state(graph: Scenegraph, events) -> ProcedureState:
    """Reconstruct a ProcedureState by folding an event log over the fresh
    initial state; used to verify logs and to resume sessions."""
    statuses = dict(initial_state(graph).statuses)
    wp_index: dict[str, int] = {}
    log: list[ProcedureEvent] = []
    for ev in events:
        log.append(ev)
        if ev.transition is Transition.AVAILABLE:
            statuses[ev.node_id] = Status.AVAILABLE
        elif ev.transition is Transition.IN_PROGRESS:
            statuses[ev.node_id] = Status.IN_PROGRESS
        elif ev.transition is Transition.WAYPOINT:
            wp_index[ev.node_id] = int(ev.detail)
        elif ev.transition is Transition.DONE:
            statuses[ev.node_id] = Status.DONE
    return ProcedureState(
        statuses=tuple(sorted(statuses.items())),
        waypoint_index=tuple(sorted(wp_index.items())),
        events=tuple(log),
    )


@dataclass(frozen=True)
class ScoreEntry:
    node_id: str
    rms_deviation: float
    completion_time: float


@dataclass(frozen=True)
class Score:
    entries: tuple[ScoreEntry, ...]

    @property
    def total_time(self) -> float:
        return sum(e.completion_time for e in self.entries)

    @property
    def mean_rms(self) -> float:
        if not self.entries:
            return 0.0
        return sum(e.rms_deviation for e in self.entries) / len(self.entries)


def point_polyline_distance(p: Vec3, waypoints) -> float:
    """Distance from a point to the closest segment of a polyline."""
    best = math.inf
    for a, b in zip(waypoints[:-1], waypoints[1:]):
        ab = b - a
        denom = float(np.dot(ab, ab))
        if denom < 1e-300:
            q = a
        else:
            t = min(1.0, max(0.0, float(np.dot(p - a, ab)) / denom))
            q = a + t * ab
        best = min(best, float(np.linalg.norm(p - q)))
    return best


def score_trajectory(node: ActionNode, samples: list[StylusSample]) -> ScoreEntry:
    """RMS deviation from the waypoint polyline over the samples spanning
    the node's in-progress window, plus the window duration."""
    if not isinstance(node.action, Trajectory):
        raise InputError(f"node {node.node_id} is not a trajectory action")
    if not samples:
        raise InputError(f"empty sample window for node {node.node_id}")
    wps = node.action.waypoints
    sq = [point_polyline_distance(s.position, wps) ** 2 for s in samples]
    rms = math.sqrt(sum(sq) / len(sq))
    completion = samples[-1].time - samples[0].time
    return ScoreEntry(node.node_id, rms, completion)
