// Single reducer over all UI state. Color overlays derive solely from the
// ChangeSet inside the displayed message; viewing a historical entry makes
// the view read-only.

import type { ServerMessage, SnapshotMessage, StepKind } from "./protocol.js";
import { loadChildrenMessage, stepMessage } from "./protocol.js";

export type Overlay = Map<string, "added" | "changed">;

export interface ViewState {
  connection: "connecting" | "open" | "closed";
  config: { depth: number; history: number } | null;
  live: SnapshotMessage | null;
  viewing: SnapshotMessage | null;
  historyIndex: number; // 0 = live view
  terminated: boolean;
  toast: string | null;
  showRemoved: boolean; // ghost removed elements, for debugging the bridge
}

export type Action =
  | { kind: "connected" }
  | { kind: "disconnected" }
  | { kind: "server"; message: ServerMessage }
  | { kind: "schemaViolation"; detail: string }
  | { kind: "viewLive" }
  | { kind: "toggleRemoved" }
  | { kind: "dismissToast" };

export function initialState(): ViewState {
  return {
    connection: "connecting",
    config: null,
    live: null,
    viewing: null,
    historyIndex: 0,
    terminated: false,
    toast: null,
    showRemoved: false,
  };
}

export function reduce(state: ViewState, action: Action): ViewState {
  switch (action.kind) {
    case "connected":
      return { ...state, connection: "open" };
    case "disconnected":
      return { ...state, connection: "closed" };
    case "viewLive":
      return { ...state, viewing: state.live, historyIndex: 0 };
    case "toggleRemoved":
      return { ...state, showRemoved: !state.showRemoved };
    case "dismissToast":
      return { ...state, toast: null };
    case "schemaViolation":
      return { ...state, toast: `malformed message: ${action.detail}` };
    case "server":
      return onServer(state, action.message);
  }
}

function onServer(state: ViewState, message: ServerMessage): ViewState {
  switch (message.type) {
    case "hello":
      return { ...state, config: message.config };
    case "snapshot":
      // a fresh live snapshot always returns the view to "now"
      return { ...state, live: message, viewing: message, historyIndex: 0 };
    case "history":
      return { ...state, viewing: message, historyIndex: message.index ?? 0 };
    case "error":
      if (message.code === "terminated") {
        return { ...state, terminated: true, toast: "debug session ended" };
      }
      return { ...state, toast: `${message.code}: ${String(message.detail)}` };
  }
}

export function overlay(snapshot: SnapshotMessage | null): Overlay {
  const colors: Overlay = new Map();
  if (!snapshot) return colors;
  const present = new Set<string>();
  for (const node of snapshot.graph.nodes) present.add(node.id);
  for (const link of snapshot.graph.links) present.add(linkKey(link));
  for (const id of snapshot.changes.addedNodes) {
    if (present.has(id)) colors.set(id, "added");
  }
  for (const id of Object.keys(snapshot.changes.changedNodes)) {
    if (present.has(id) && !colors.has(id)) colors.set(id, "changed");
  }
  for (const link of snapshot.changes.addedLinks) {
    const key = linkKey(link);
    if (present.has(key)) colors.set(key, "added");
  }
  return colors;
}

export function linkKey(link: { source: string; field: string; target: string }): string {
  return `${link.source}→${link.field}→${link.target}`;
}

export interface Controls {
  expand: boolean;
  step: boolean;
  history: boolean;
}

export function controls(state: ViewState): Controls {
  const liveView = state.historyIndex === 0;
  const open = state.connection === "open" && !state.terminated;
  return {
    expand: open && liveView,
    step: open && liveView,
    history: state.connection === "open" && (state.live?.historyLength ?? 0) > 0,
  };
}

// Double-click on an object box: emits loadChildren only for unexpanded
// nodes in the live view; anything else stays silent.
export function expansionRequest(state: ViewState, nodeId: string): string | null {
  if (!controls(state).expand || !state.viewing) return null;
  const node = state.viewing.graph.nodes.find((n) => n.id === nodeId);
  if (!node || node.expanded) return null;
  return loadChildrenMessage(nodeId);
}

export function stepRequest(state: ViewState, kind: StepKind): string | null {
  if (!controls(state).step) return null;
  return stepMessage(kind);
}
