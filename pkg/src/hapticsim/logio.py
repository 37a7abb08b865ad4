"""Canonical JSON serialization for records and logs.

One record per line, keys in fixed order, floats via repr (shortest
round-trip) so identical runs serialize to identical bytes. These schemas
are the on-disk and on-wire truth; keep them stable.
"""

from __future__ import annotations

import json
from typing import IO

from .haptic_core import ContactState, ForceBreakdown, StylusSample
from .procedure import ProcedureEvent, Transition
from .servo import TickRecord, TickStats


def vec_to_list(v) -> list[float]:
    return [float(v[0]), float(v[1]), float(v[2])]


def sample_to_dict(s: StylusSample) -> dict:
    return {"t": s.time, "position": vec_to_list(s.position),
            "velocity": vec_to_list(s.velocity)}


def contact_to_dict(c: ContactState) -> dict:
    return {
        "organ_id": c.organ_id,
        "proxy": vec_to_list(c.proxy_position),
        "depth": c.depth,
        "normal": vec_to_list(c.normal),
        "phase": c.phase.value,
    }


def force_to_dict(f: ForceBreakdown) -> dict:
    return {
        "spring": vec_to_list(f.spring),
        "damping": vec_to_list(f.damping),
        "friction": vec_to_list(f.friction),
        "pop": vec_to_list(f.pop),
        "normal_force": f.normal_force,
        "raw_total": vec_to_list(f.raw_total),
        "total": vec_to_list(f.total),
        "clamped": f.clamped,
    }


def tick_record_to_dict(r: TickRecord) -> dict:
    return {
        "tick": r.tick,
        "sample": sample_to_dict(r.sample),
        "contact": contact_to_dict(r.contact),
        "force": force_to_dict(r.force),
        "event": r.event.value if r.event else None,
        "lateness": r.lateness,
    }


def stats_to_dict(s: TickStats) -> dict:
    return {
        "ticks": s.ticks,
        "deadline_misses": s.deadline_misses,
        "miss_rate": s.miss_rate,
        "p50_lateness": s.p50_lateness,
        "p99_lateness": s.p99_lateness,
        "max_lateness": s.max_lateness,
        "clamped_count": s.clamped_count,
    }


def procedure_event_to_dict(e: ProcedureEvent) -> dict:
    return {"t": e.time, "node_id": e.node_id,
            "transition": e.transition.value, "detail": e.detail}


def procedure_event_from_dict(d: dict) -> ProcedureEvent:
    return ProcedureEvent(float(d["t"]), str(d["node_id"]),
                          Transition(d["transition"]), d.get("detail"))


def dump_line(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def write_jsonl(fh: IO[str], dicts) -> None:
    for d in dicts:
        fh.write(dump_line(d))
        fh.write("\n")


def read_jsonl(path: str) -> list[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
