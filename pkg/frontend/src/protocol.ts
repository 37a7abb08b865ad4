/**
 * Wire protocol types shared with the session service: newline-delimited
 * JSON over a plain socket, or one JSON message per WebSocket text frame.
 * Every message carries a per-direction monotonically increasing `seq`.
 */

export const PROTOCOL_VERSION = 1;

export type Vec3 = [number, number, number];
export type Quat = [number, number, number, number];

export type Material = {
    stiffness_k: number;
    damping_b: number;
    friction_mu: number;
    pop_force: number;
    pop_depth: number;
    post_pop_stiffness_scale: number;
};

export type OrganSummary = {
    organ_id: string;
    name: string;
    shape_kind: string;
    material: Material;
};

export type NodeSummary = {
    node_id: string;
    kind: string;
    status: string;
};

export type WelcomeMsg = {
    type: "welcome";
    seq: number;
    session_id: string;
    protocol_version: number;
    scene: { organs: OrganSummary[] };
    procedure: { nodes: NodeSummary[]; edges: [string, string][] };
};

export type ForceBreakdown = {
    spring: Vec3;
    damping: Vec3;
    friction: Vec3;
    pop: Vec3;
    normal_force: number;
    raw_total: Vec3;
    total: Vec3;
    clamped: boolean;
};

export type ContactSummary = {
    organ_id: string | null;
    proxy: Vec3;
    depth: number;
    normal: Vec3;
    phase: string;
};

export type ForceMsg = {
    type: "force";
    seq: number;
    t: number;
    tick: number;
    force: ForceBreakdown;
    contact: ContactSummary;
    event: string | null;
};

export type ProcedureEventMsg = {
    type: "procedure_event";
    seq: number;
    t: number;
    node_id: string;
    transition: "available" | "in_progress" | "waypoint" | "done" | "warning";
    detail: number | string | null;
};

export type StatsMsg = {
    type: "stats";
    seq: number;
    ticks: number;
    deadline_misses: number;
    miss_rate: number;
    p50_lateness: number;
    p99_lateness: number;
    max_lateness: number;
    clamped_count: number;
};

export type ParamAppliedMsg = {
    type: "param_applied";
    seq: number;
    organ_id: string;
    material: Material;
};

export type ErrorMsg = {
    type: "error";
    seq: number;
    code: string;
    message: string;
};

export type ServerMsg =
    | WelcomeMsg
    | ForceMsg
    | ProcedureEventMsg
    | StatsMsg
    | ParamAppliedMsg
    | ErrorMsg;

export type WorldEventPayload = {
    kind: "insert" | "remove";
    object_id: string;
    position: Vec3;
    orientation?: Quat;
};

/** Parse one server frame; null for anything unusable. */
export function decodeServerMessage(text: string): ServerMsg | null {
    let obj: unknown;
    try {
        obj = JSON.parse(text);
    } catch {
        return null;
    }
    if (typeof obj !== "object" || obj === null) return null;
    const msg = obj as { type?: unknown; seq?: unknown };
    if (typeof msg.type !== "string" || typeof msg.seq !== "number") return null;
    switch (msg.type) {
        case "welcome":
        case "force":
        case "procedure_event":
        case "stats":
        case "param_applied":
        case "error":
            return obj as ServerMsg;
        default:
            return null;
    }
}
