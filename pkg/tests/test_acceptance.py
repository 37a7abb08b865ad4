"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line. Tolerances are pinned here and must not be loosened.

Run with `pytest tests/test_acceptance.py -s` to see the criterion lines.
"""

import itertools
import json
import math
import random
import subprocess
import sys
import time
import warnings

import numpy as np
import pytest

from hapticsim.geometry import (Capsule, OrganModel, Scene, Slab, Sphere,
                                closest_surface_point, signed_distance)
from hapticsim.haptic_core import (ContactState, HapticMaterial, Phase,
                                   PhaseEvent, compute_force, resolve_contact)
from hapticsim.procedure import (ActionNode, Insert, InsertEvent, Scenegraph,
                                 Status, Transition, apply_world_event,
                                 initial_state, is_complete)
from hapticsim.server import ClientConn, Session
from hapticsim.servo import ServoParams, ServoState, SimulatedDevice, tick
from hapticsim.session import run_session
from hapticsim.wire import SERVER_TYPES
from conftest import data_path


def report(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE {status}: {name}" + (f" ({detail})" if detail else ""))


# --------------------------------------------------------------------------
# Criterion 1: force model matches an independent transcription of the term
# formulas on 10,000 random inputs, within 1e-9 N per component, under 5 s.
# --------------------------------------------------------------------------

def oracle_force(m: HapticMaterial, depth: float, normal, velocity,
                 penetrated: bool, f_max: float = 3.3,
                 v_deadband: float = 1e-4):
    """Straight-line transcription of the force terms, no shared code with
    the engine (plain Python floats, no numpy)."""
    d = depth if depth > 0.0 else 0.0
    if d <= 0.0:
        return [0.0, 0.0, 0.0]
    nx, ny, nz = float(normal[0]), float(normal[1]), float(normal[2])
    vx, vy, vz = float(velocity[0]), float(velocity[1]), float(velocity[2])
    k = m.stiffness_k * (m.post_pop_stiffness_scale if penetrated else 1.0)
    spring = [k * d * nx, k * d * ny, k * d * nz]
    big_n = k * d
    vn = vx * nx + vy * ny + vz * nz
    damping = [-m.damping_b * vn * nx, -m.damping_b * vn * ny,
               -m.damping_b * vn * nz]
    vt = [vx - vn * nx, vy - vn * ny, vz - vn * nz]
    vt_mag = math.sqrt(vt[0] ** 2 + vt[1] ** 2 + vt[2] ** 2)
    if vt_mag > v_deadband and m.friction_mu > 0.0:
        friction = [-m.friction_mu * big_n * vt[0] / vt_mag,
                    -m.friction_mu * big_n * vt[1] / vt_mag,
                    -m.friction_mu * big_n * vt[2] / vt_mag]
    else:
        friction = [0.0, 0.0, 0.0]
    if penetrated:
        pop = [0.0, 0.0, 0.0]
    else:
        pop = [m.pop_force * nx, m.pop_force * ny, m.pop_force * nz]
    raw = [spring[i] + damping[i] + friction[i] + pop[i] for i in range(3)]
    mag = math.sqrt(raw[0] ** 2 + raw[1] ** 2 + raw[2] ** 2)
    if mag <= f_max:
        return raw
    scale = f_max / mag
    return [raw[0] * scale, raw[1] * scale, raw[2] * scale]


def random_tuple(rng):
    m = HapticMaterial(
        stiffness_k=rng.uniform(0, 2000),
        damping_b=rng.uniform(0, 10),
        friction_mu=rng.uniform(0, 2),
        pop_force=rng.uniform(0, 3),
        pop_depth=rng.uniform(1e-4, 0.02),
        post_pop_stiffness_scale=rng.uniform(0, 1),
    )
    n = rng.normal(size=3)
    while np.linalg.norm(n) < 1e-3:
        n = rng.normal(size=3)
    n = n / np.linalg.norm(n)
    depth = rng.uniform(-0.01, 0.02)
    velocity = rng.uniform(-1, 1, size=3)
    phase = Phase.PENETRATED if rng.uniform() < 0.5 else Phase.CONTACT
    return m, depth, n, velocity, phase


def test_criterion_force_oracle_equivalence():
    rng = np.random.default_rng(20240501)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(10_000):
        m, depth, n, velocity, phase = random_tuple(rng)
        contact = ContactState("o", np.zeros(3), depth, n, phase)
        f = compute_force(m, contact, velocity)
        expected = oracle_force(m, depth, n, velocity,
                                phase is Phase.PENETRATED)
        err = max(abs(float(f.total[i]) - expected[i]) for i in range(3))
        worst = max(worst, err)
        assert err <= 1e-9, (m, depth, n, velocity, phase, err)
    elapsed = time.perf_counter() - t0
    ok = elapsed < 5.0
    report("force model oracle equivalence (10k tuples, <=1e-9 N)", ok,
           f"worst err {worst:.2e} N, {elapsed:.2f} s")
    assert ok, f"oracle sweep took {elapsed:.2f} s (budget 5 s)"


# --------------------------------------------------------------------------
# Criterion 2: out of contact (depth <= 0) every term is exactly zero.
# --------------------------------------------------------------------------

def test_criterion_contact_gate():
    rng = np.random.default_rng(7)
    zero = np.zeros(3)
    for _ in range(2_000):
        m, _, n, velocity, phase = random_tuple(rng)
        depth = rng.uniform(-0.05, 0.0)
        f = compute_force(m, ContactState("o", zero, depth, n, phase), velocity)
        for term in (f.spring, f.damping, f.friction, f.pop, f.raw_total,
                     f.total):
            assert np.array_equal(term, zero)
        assert f.normal_force == 0.0
    report("contact gate: depth <= 0 gives exactly zero force", True)


# --------------------------------------------------------------------------
# Criterion 3: pop-through fires exactly once on a monotone ramp, drops the
# force strictly at the event, and does not re-fire on a dip-and-return.
# --------------------------------------------------------------------------

def _phase_walk(material, depths):
    scene_mat = material
    events = []
    totals = []
    phase = Phase.FREE
    from hapticsim.haptic_core import step_phase
    for d in depths:
        phase, ev = step_phase(phase, d, scene_mat)
        contact = ContactState("o" if d > 0 else None, np.zeros(3), d,
                               np.array([0.0, 1.0, 0.0]), phase)
        f = compute_force(scene_mat, contact, np.zeros(3))
        totals.append(float(np.linalg.norm(f.total)))
        events.append(ev)
    return events, totals


def test_criterion_pop_through():
    m = HapticMaterial(stiffness_k=500.0, pop_force=0.6, pop_depth=0.004,
                       post_pop_stiffness_scale=0.3)
    ramp = np.linspace(0.0005, 0.008, 40)
    events, totals = _phase_walk(m, ramp)
    pops = [i for i, e in enumerate(events) if e is PhaseEvent.POP_THROUGH]
    assert len(pops) == 1, "monotone ramp must pop exactly once"
    i = pops[0]
    drop = totals[i - 1] - totals[i]
    assert totals[i] < totals[i - 1], "force must drop strictly at pop-through"

    dip = list(np.linspace(0.001, 0.006, 20)) + \
        list(np.linspace(0.006, 0.002, 12)) + \
        list(np.linspace(0.002, 0.007, 12))
    events2, _ = _phase_walk(m, dip)
    assert sum(e is PhaseEvent.POP_THROUGH for e in events2) == 1, \
        "dip staying in contact must not re-arm the pop"
    report("pop-through: one event per penetration, strict force drop", True,
           f"drop {drop:.3f} N at event")


# --------------------------------------------------------------------------
# Criterion 4: passivity over a closed approach/retract cycle at dt = 1 ms;
# elastic-only work within 1e-6 J, damped work strictly negative.
# --------------------------------------------------------------------------

def _cycle_work(damping_b: float) -> float:
    material = HapticMaterial(stiffness_k=800.0, damping_b=damping_b,
                              friction_mu=0.0, pop_force=0.0, pop_depth=1.0)
    scene = Scene((OrganModel("ball", "ball",
                              Sphere(center=[0, 0, 0], radius=0.05), material),))
    dt = 0.001
    n_half = 500
    ys = np.concatenate([np.linspace(0.06, 0.045, n_half),
                         np.linspace(0.045, 0.06, n_half)[1:]])
    positions = [np.array([0.0, y, 0.0]) for y in ys]
    # central-difference velocity; endpoints are out of contact anyway
    work = 0.0
    from hapticsim.haptic_core import step_phase
    phase = Phase.FREE
    for i, p in enumerate(positions):
        if 0 < i < len(positions) - 1:
            v = (positions[i + 1] - positions[i - 1]) / (2 * dt)
        else:
            v = np.zeros(3)
        c = resolve_contact(scene, p)
        phase, _ = step_phase(phase, c.depth, material)
        c = ContactState(c.organ_id, c.proxy_position, c.depth, c.normal, phase)
        f = compute_force(material, c, v)
        work += float(np.dot(f.total, v)) * dt
    return work


def test_criterion_passivity():
    w_elastic = _cycle_work(0.0)
    assert abs(w_elastic) <= 1e-6, f"elastic cycle work {w_elastic} J"
    w_damped = _cycle_work(2.0)
    assert w_damped < -1e-6, f"damped cycle work {w_damped} J not dissipative"
    report("passivity: elastic round-trip ~0, damped cycle dissipates", True,
           f"elastic {w_elastic:.2e} J, damped {w_damped:.2e} J")


# --------------------------------------------------------------------------
# Criterion 5: geometry gradients and closest-point idempotence over 1,000
# random queries per shape kind.
# --------------------------------------------------------------------------

def _random_shape(kind: str, rng):
    if kind == "sphere":
        return Sphere(center=rng.uniform(-0.1, 0.1, 3),
                      radius=rng.uniform(0.01, 0.08))
    if kind == "capsule":
        a = rng.uniform(-0.1, 0.1, 3)
        b = a + rng.uniform(0.02, 0.15, 3)
        return Capsule(a=a, b=b, radius=rng.uniform(0.005, 0.05))
    n = rng.normal(size=3)
    n /= np.linalg.norm(n)
    return Slab(point=rng.uniform(-0.1, 0.1, 3), normal=n,
                thickness=rng.uniform(0.01, 0.08))


def _degenerate(shape, p) -> bool:
    if isinstance(shape, Sphere):
        return np.linalg.norm(p - shape.center) < 1e-3
    if isinstance(shape, Capsule):
        from hapticsim.geometry import _segment_closest
        return np.linalg.norm(p - _segment_closest(shape, p)) < 1e-3
    return abs(float(np.dot(p - shape.point, shape.normal))) < 1e-3


def test_criterion_geometry():
    rng = np.random.default_rng(99)
    h = 1e-6
    checked = {"sphere": 0, "capsule": 0, "slab": 0}
    for kind in checked:
        while checked[kind] < 1000:
            shape = _random_shape(kind, rng)
            p = rng.uniform(-0.25, 0.25, 3)
            if _degenerate(shape, p):
                continue
            point, normal = closest_surface_point(shape, p)
            grad = np.zeros(3)
            for i in range(3):
                e = np.zeros(3)
                e[i] = h
                grad[i] = (signed_distance(shape, p + e)
                           - signed_distance(shape, p - e)) / (2 * h)
            assert abs(np.linalg.norm(grad) - 1.0) <= 1e-4
            assert np.all(np.abs(grad - normal) <= 1e-4), (kind, p, grad, normal)
            again, _ = closest_surface_point(shape, point)
            assert np.linalg.norm(again - point) <= 1e-9
            assert abs(signed_distance(shape, point)) <= 1e-9
            checked[kind] += 1
    report("geometry: FD gradients match normals, closest point idempotent",
           True, "1000 queries per shape kind")


# --------------------------------------------------------------------------
# Criterion 6: byte-identical force logs from repeated CLI replays of the
# shipped bundle.
# --------------------------------------------------------------------------

def _cli_run(out_dir: str) -> None:
    cmd = [sys.executable, "-m", "hapticsim", "run",
           "--config", data_path("config_replay.json"),
           "--trajectory", data_path("trajectory_kidney_transplant.jsonl"),
           "--events", data_path("events_kidney_transplant.jsonl"),
           "--out", out_dir]
    proc = subprocess.run(cmd, capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stderr


def test_criterion_replay_determinism(tmp_path):
    _cli_run(str(tmp_path / "run1"))
    _cli_run(str(tmp_path / "run2"))
    log1 = (tmp_path / "run1" / "force_log.jsonl").read_bytes()
    log2 = (tmp_path / "run2" / "force_log.jsonl").read_bytes()
    assert log1 == log2, "replay force logs differ between runs"
    assert len(log1) > 0
    proc1 = (tmp_path / "run1" / "procedure_log.jsonl").read_bytes()
    proc2 = (tmp_path / "run2" / "procedure_log.jsonl").read_bytes()
    assert proc1 == proc2
    report("determinism: repeated CLI replays byte-identical", True,
           f"{len(log1)} bytes of force log")


# --------------------------------------------------------------------------
# Criterion 7: the shipped trajectory and events drive the full procedure to
# completion, incision first and closure last.
# --------------------------------------------------------------------------

def test_criterion_full_procedure_replay(shipped_bundle, shipped_trajectory,
                                         shipped_events):
    result = run_session(shipped_bundle, shipped_trajectory, shipped_events)
    assert result.complete, "procedure incomplete after shipped replay"
    done = [e.node_id for e in result.procedure_events
            if e.transition is Transition.DONE]
    assert done[0] == "incision_abdomen", f"first completed: {done[0]}"
    assert done[-1] == "close_abdomen", f"last completed: {done[-1]}"
    report("full-procedure replay: complete, incision first, closure last",
           True, f"{len(done)} nodes, {result.stats.ticks} ticks")


# --------------------------------------------------------------------------
# Criterion 8: scenegraph order soundness on a diamond graph, brute-forced
# against the exhaustive-permutation oracle.
# --------------------------------------------------------------------------

def test_criterion_scenegraph_soundness():
    nodes = tuple(ActionNode(nid, Insert(nid.lower(), np.zeros(3), 0.01,
                                         (0, 0, 0, 1), 0.5))
                  for nid in "ABCD")
    edges = (("A", "B"), ("A", "C"), ("B", "D"), ("C", "D"))
    graph = Scenegraph(nodes, edges)

    accepted = set()
    for perm in itertools.permutations("ABCD"):
        state = initial_state(graph)
        ok = True
        for nid in perm:
            state, _ = apply_world_event(
                graph, state, InsertEvent(0.0, nid.lower(), np.zeros(3)))
            if state.status(nid) is not Status.DONE:
                ok = False
                break
        if ok:
            assert is_complete(graph, state)
            accepted.add(perm)

    oracle = {perm for perm in itertools.permutations("ABCD")
              if all(perm.index(a) < perm.index(b) for a, b in edges)}
    assert accepted == oracle
    report("scenegraph soundness: accepts exactly the topological orders",
           True, f"{len(accepted)}/24 orders")


# --------------------------------------------------------------------------
# Criterion 9: servo timing. Stats must always be emitted; the 0.1% miss
# rate is a soft, machine-dependent gate (warn, do not fail).
# --------------------------------------------------------------------------

def test_criterion_servo_timing():
    cmd = [sys.executable, "-m", "hapticsim", "bench",
           "--config", data_path("config_replay.json"),
           "--duration", "10"]
    proc = subprocess.run(cmd, capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    stats = json.loads(proc.stdout.strip().splitlines()[-1])
    for key in ("ticks", "deadline_misses", "p50_lateness", "p99_lateness",
                "max_lateness"):
        assert key in stats
    assert stats["ticks"] == 10_000
    miss_rate = stats["deadline_misses"] / stats["ticks"]
    detail = (f"p50 {stats['p50_lateness'] * 1e6:.0f} us, "
              f"p99 {stats['p99_lateness'] * 1e6:.0f} us, "
              f"max {stats['max_lateness'] * 1e6:.0f} us, "
              f"miss rate {miss_rate:.4%}")
    if miss_rate >= 0.001:
        report("servo timing (SOFT gate, machine-dependent)", False, detail)
        warnings.warn(f"deadline miss rate {miss_rate:.4%} >= 0.1% on this "
                      f"machine; soft gate per release criteria ({detail})")
    else:
        report("servo timing: 10 s at 1 kHz, miss rate < 0.1%", True, detail)


# --------------------------------------------------------------------------
# Criterion 10: one million fuzzed client messages crash nothing and always
# produce either normal handling or an error reply.
# --------------------------------------------------------------------------

VALID_TEMPLATES = [
    {"type": "hello", "protocol_version": 1},
    {"type": "pose", "t": 0.1, "position": [0.0, 0.0, 0.105]},
    {"type": "tool_select", "tool": "scalpel"},
    {"type": "world_event", "event": {"kind": "insert", "object_id": "kidney",
                                      "position": [0.06, -0.03, 0.06],
                                      "orientation": [0, 0, 0, 1]}},
    {"type": "world_event", "event": {"kind": "remove", "object_id": "clamps",
                                      "position": [0.2, 0.2, 0.2]}},
    {"type": "param_override", "organ_id": "bladder",
     "material": {"stiffness_k": 300.0}},
    {"type": "start"},
    {"type": "pause"},
]

JUNK_VALUES = [None, True, False, 0, -1, 1e308, 1e400, "x", "", [], {},
               [1, 2], [1, 2, 3], {"a": 1}, "NaN", float("nan"),
               chr(0), 10 ** 40, [[1, 2, 3]], {"kind": "explode"}]


def _fuzz_message(rng: random.Random, seq: int, seq_junk: bool) -> bytes:
    roll = rng.random()
    if roll < 0.25:
        n = rng.randrange(0, 64)
        return bytes(rng.randrange(256) for _ in range(n))
    if roll < 0.4:
        value = rng.choice(JUNK_VALUES)
        try:
            return json.dumps(value).encode()
        except ValueError:
            return b'{"broken":'
    msg = dict(rng.choice(VALID_TEMPLATES))
    if seq_junk and rng.random() > 0.8:
        msg["seq"] = rng.choice([0, -5, "seq", None, 2 ** 70])
    else:
        msg["seq"] = seq
    if rng.random() < 0.5:
        # mutate one field (never seq in the plausible phase, so the
        # monotonic floor survives and handlers stay reachable)
        keys = sorted(msg)
        if not seq_junk:
            keys = [k for k in keys if k != "seq"]
        key = rng.choice(keys)
        if rng.random() < 0.5:
            del msg[key]
        else:
            msg[key] = rng.choice(JUNK_VALUES)
    try:
        text = json.dumps(msg)
    except ValueError:
        text = repr(msg)
    if rng.random() < 0.05:
        cut = rng.randrange(len(text) + 1)
        text = text[:cut]
    return text.encode()


def test_criterion_protocol_robustness(shipped_bundle):
    session = Session("fuzz", shipped_bundle)
    sink: list[str] = []

    def fresh_conn():
        conn = ClientConn(sink.append)
        conn.on_hello = lambda msg: session
        return conn

    rng = random.Random(0xFEED)
    n_messages = 1_000_000
    errors = 0
    handled = 0
    conn = fresh_conn()
    t0 = time.perf_counter()
    for i in range(n_messages):
        if i % 10_000 == 0:
            # rotate connections so a junk seq (which legally raises the
            # monotonic floor forever) cannot starve later coverage
            conn.detach()
            conn = fresh_conn()
        # first half: anything goes; second half: plausible clients with
        # valid sequence numbers but mutated payloads, keeping the deeper
        # handler paths (procedure, overrides, poses) under fire
        seq_junk = i < n_messages // 2
        replies = conn.process_raw(_fuzz_message(rng, (i % 10_000) + 1,
                                                 seq_junk))
        assert isinstance(replies, list)
        if not replies:
            handled += 1
        for reply in replies:
            assert reply["type"] in SERVER_TYPES
            if reply["type"] == "error":
                errors += 1
                assert "code" in reply and "message" in reply
            else:
                handled += 1
    elapsed = time.perf_counter() - t0
    assert handled > 10_000, "fuzz never reached the accepting paths"
    # the session must still be serviceable on a fresh connection
    conn = fresh_conn()
    replies = conn.process_raw(json.dumps(
        {"type": "hello", "seq": 1, "protocol_version": 1}))
    assert replies and replies[0]["type"] == "welcome"
    replies = conn.process_raw(json.dumps(
        {"type": "pose", "seq": 2, "t": 0.0, "position": [0, 0, 0.2]}))
    assert replies == []
    session.tick_once()
    report("protocol robustness: 1M fuzzed messages, no crash", True,
           f"{errors} error replies, {handled} accepted, {elapsed:.1f} s")
