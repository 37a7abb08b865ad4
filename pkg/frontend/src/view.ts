/**
 * ViewState and its reducer.
 *
 * The UI holds no simulation truth: the checklist mirrors server procedure
 * events exactly, every displayed number originates from a server message,
 * and rebuilding the state from a welcome plus the event backlog must
 * reproduce what an uninterrupted client shows. Keep this module pure; the
 * DOM layer consumes the state read-only.
 */

import {
    ForceMsg,
    Material,
    NodeSummary,
    OrganSummary,
    ServerMsg,
    StatsMsg,
} from "./protocol";

export type ChecklistItem = {
    node_id: string;
    kind: string;
    status: string;
    waypointsDone: number;
};

export type TickerEntry = {
    t: number;
    text: string;
};

export type ViewState = {
    connection: "disconnected" | "connecting" | "connected";
    sessionId: string | null;
    organs: OrganSummary[];
    materials: Record<string, Material>;
    checklist: ChecklistItem[];
    latestForce: ForceMsg | null;
    popFlashes: number;
    ticker: TickerEntry[];
    stats: StatsMsg | null;
    lastError: string | null;
};

const TICKER_LIMIT = 50;

export function initialViewState(): ViewState {
    return {
        connection: "disconnected",
        sessionId: null,
        organs: [],
        materials: {},
        checklist: [],
        latestForce: null,
        popFlashes: 0,
        ticker: [],
        stats: null,
        lastError: null,
    };
}

function checklistFromNodes(nodes: NodeSummary[]): ChecklistItem[] {
    return nodes.map((n) => ({
        node_id: n.node_id,
        kind: n.kind,
        status: n.status,
        waypointsDone: 0,
    }));
}

function pushTicker(state: ViewState, t: number, text: string): void {
    state.ticker.push({ t, text });
    if (state.ticker.length > TICKER_LIMIT) {
        state.ticker.splice(0, state.ticker.length - TICKER_LIMIT);
    }
}

/**
 * Fold one server message into the view state (returns a new state object;
 * nested arrays are replaced, never mutated in place by callers).
 */
export function applyMessage(prev: ViewState, msg: ServerMsg): ViewState {
    const state: ViewState = {
        ...prev,
        checklist: prev.checklist.map((c) => ({ ...c })),
        ticker: [...prev.ticker],
        materials: { ...prev.materials },
    };
    switch (msg.type) {
        case "welcome": {
            state.sessionId = msg.session_id;
            state.organs = msg.scene.organs;
            state.materials = {};
            for (const organ of msg.scene.organs) {
                state.materials[organ.organ_id] = organ.material;
            }
            // the welcome summary is the checklist baseline; subsequent
            // procedure events (including the replayed backlog) mutate it
            state.checklist = checklistFromNodes(msg.procedure.nodes);
            break;
        }
        case "procedure_event": {
            const item = state.checklist.find((c) => c.node_id === msg.node_id);
            if (msg.transition === "warning" || !item) {
                pushTicker(state, msg.t, `warning: ${msg.node_id || "event"} ${msg.detail ?? ""}`);
                break;
            }
            if (msg.transition === "waypoint") {
                item.waypointsDone = typeof msg.detail === "number" ? msg.detail : item.waypointsDone + 1;
            } else {
                item.status = msg.transition;
                pushTicker(state, msg.t, `${msg.node_id}: ${msg.transition}`);
            }
            break;
        }
        case "force": {
            state.latestForce = msg;
            if (msg.event === "pop_through") {
                state.popFlashes = prev.popFlashes + 1;
                pushTicker(state, msg.t, `pop-through in ${msg.contact.organ_id}`);
            } else if (msg.event === "contact_start" || msg.event === "contact_end") {
                pushTicker(state, msg.t, `${msg.event} ${msg.contact.organ_id ?? ""}`);
            }
            break;
        }
        case "stats":
            state.stats = msg;
            break;
        case "param_applied":
            state.materials[msg.organ_id] = msg.material;
            pushTicker(state, 0, `material updated: ${msg.organ_id}`);
            break;
        case "error":
            state.lastError = `${msg.code}: ${msg.message}`;
            break;
    }
    return state;
}

export function applyAll(state: ViewState, msgs: ServerMsg[]): ViewState {
    return msgs.reduce(applyMessage, state);
}

/** Stable fingerprint of simulation-truth state, for statelessness checks. */
export function checklistFingerprint(state: ViewState): string {
    return JSON.stringify(
        state.checklist.map((c) => [c.node_id, c.status, c.waypointsDone]),
    );
}
