// Visual Debugging API message schemas: parsing, validation, and the
// outbound message builders. The UI performs no diffing of its own; the
// change set inside each snapshot is the only source of highlighting.

export interface Location {
  file: string;
  line: number;
  method: string | null;
}

export interface GraphAttribute {
  name: string;
  type: string;
  value: string;
}

export interface GraphNode {
  id: string;
  type: string;
  attributes: GraphAttribute[];
  expanded: boolean;
}

export interface GraphLink {
  source: string;
  field: string;
  target: string;
}

export interface RootBinding {
  name: string;
  nodeId?: string;
  primitive?: { type: string; value: string };
}

export interface GraphDoc {
  roots: RootBinding[];
  nodes: GraphNode[];
  links: GraphLink[];
}

export interface ChangesDoc {
  addedNodes: string[];
  changedNodes: Record<string, string[]>;
  removedNodes: string[];
  addedLinks: GraphLink[];
  removedLinks: GraphLink[];
}

export interface HelloMessage {
  type: "hello";
  seq: number;
  version: number;
  config: { depth: number; history: number };
}

export interface SnapshotMessage {
  type: "snapshot" | "history";
  seq: number;
  stepSeq: number;
  location: Location;
  graph: GraphDoc;
  changes: ChangesDoc;
  historyLength: number;
  historical?: boolean;
  index?: number;
}

export interface ErrorMessage {
  type: "error";
  seq: number;
  code: "unknown-node" | "range" | "not-stopped" | "terminated" | string;
  detail: unknown;
}

export type ServerMessage = HelloMessage | SnapshotMessage | ErrorMessage;

export type StepKind = "next" | "stepIn" | "stepOut" | "continue";

export class SchemaError extends Error {
  constructor(public path: string, detail: string) {
    super(`${path}: ${detail}`);
  }
}

function need(condition: boolean, path: string, detail: string): asserts condition {
  if (!condition) throw new SchemaError(path, detail);
}

function isRecord(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null && !Array.isArray(value);
}

function checkString(value: unknown, path: string): string {
  need(typeof value === "string", path, `expected string, got ${typeof value}`);
  return value;
}

function checkNumber(value: unknown, path: string): number {
  need(typeof value === "number" && Number.isFinite(value), path, "expected number");
  return value;
}

function checkArray(value: unknown, path: string): unknown[] {
  need(Array.isArray(value), path, "expected array");
  return value;
}

function checkLocation(value: unknown, path: string): Location {
  need(isRecord(value), path, "expected object");
  return {
    file: checkString(value.file, `${path}.file`),
    line: checkNumber(value.line, `${path}.line`),
    method: value.method == null ? null : checkString(value.method, `${path}.method`),
  };
}

function checkLink(value: unknown, path: string): GraphLink {
  need(isRecord(value), path, "expected object");
  return {
    source: checkString(value.source, `${path}.source`),
    field: checkString(value.field, `${path}.field`),
    target: checkString(value.target, `${path}.target`),
  };
}

function checkGraph(value: unknown, path: string): GraphDoc {
  need(isRecord(value), path, "expected object");
  const roots = checkArray(value.roots, `${path}.roots`).map((entry, i) => {
    const rootPath = `${path}.roots[${i}]`;
    need(isRecord(entry), rootPath, "expected object");
    const name = checkString(entry.name, `${rootPath}.name`);
    if (entry.nodeId !== undefined) {
      return { name, nodeId: checkString(entry.nodeId, `${rootPath}.nodeId`) };
    }
    need(isRecord(entry.primitive), `${rootPath}.primitive`, "root needs nodeId or primitive");
    return {
      name,
      primitive: {
        type: checkString(entry.primitive.type, `${rootPath}.primitive.type`),
        value: checkString(entry.primitive.value, `${rootPath}.primitive.value`),
      },
    };
  });
  const nodes = checkArray(value.nodes, `${path}.nodes`).map((entry, i) => {
    const nodePath = `${path}.nodes[${i}]`;
    need(isRecord(entry), nodePath, "expected object");
    return {
      id: checkString(entry.id, `${nodePath}.id`),
      type: checkString(entry.type, `${nodePath}.type`),
      expanded: Boolean(entry.expanded),
      attributes: checkArray(entry.attributes, `${nodePath}.attributes`).map((attr, j) => {
        const attrPath = `${nodePath}.attributes[${j}]`;
        need(isRecord(attr), attrPath, "expected object");
        return {
          name: checkString(attr.name, `${attrPath}.name`),
          type: checkString(attr.type, `${attrPath}.type`),
          value: checkString(attr.value, `${attrPath}.value`),
        };
      }),
    };
  });
  const links = checkArray(value.links, `${path}.links`).map((entry, i) =>
    checkLink(entry, `${path}.links[${i}]`),
  );
  return { roots, nodes, links };
}

function checkChanges(value: unknown, path: string): ChangesDoc {
  need(isRecord(value), path, "expected object");
  const strings = (entry: unknown, entryPath: string) =>
    checkArray(entry, entryPath).map((item, i) => checkString(item, `${entryPath}[${i}]`));
  need(isRecord(value.changedNodes), `${path}.changedNodes`, "expected object");
  const changedNodes: Record<string, string[]> = {};
  for (const [id, fields] of Object.entries(value.changedNodes)) {
    changedNodes[id] = strings(fields, `${path}.changedNodes[${id}]`);
  }
  return {
    addedNodes: strings(value.addedNodes, `${path}.addedNodes`),
    changedNodes,
    removedNodes: strings(value.removedNodes, `${path}.removedNodes`),
    addedLinks: checkArray(value.addedLinks, `${path}.addedLinks`).map((entry, i) =>
      checkLink(entry, `${path}.addedLinks[${i}]`),
    ),
    removedLinks: checkArray(value.removedLinks, `${path}.removedLinks`).map((entry, i) =>
      checkLink(entry, `${path}.removedLinks[${i}]`),
    ),
  };
}

export function parseServerMessage(raw: unknown): ServerMessage {
  const value = typeof raw === "string" ? JSON.parse(raw) : raw;
  need(isRecord(value), "$", "expected object");
  const seq = checkNumber(value.seq, "$.seq");
  switch (value.type) {
    case "hello": {
      need(isRecord(value.config), "$.config", "expected object");
      return {
        type: "hello",
        seq,
        version: checkNumber(value.version, "$.version"),
        config: {
          depth: checkNumber(value.config.depth, "$.config.depth"),
          history: checkNumber(value.config.history, "$.config.history"),
        },
      };
    }
    case "snapshot":
    case "history": {
      const message: SnapshotMessage = {
        type: value.type,
        seq,
        stepSeq: checkNumber(value.stepSeq, "$.stepSeq"),
        location: checkLocation(value.location, "$.location"),
        graph: checkGraph(value.graph, "$.graph"),
        changes: checkChanges(value.changes, "$.changes"),
        historyLength: checkNumber(value.historyLength, "$.historyLength"),
      };
      if (value.type === "history") {
        message.historical = Boolean(value.historical);
        message.index = checkNumber(value.index, "$.index");
      }
      return message;
    }
    case "error":
      return { type: "error", seq, code: checkString(value.code, "$.code"), detail: value.detail };
    default:
      throw new SchemaError("$.type", `unknown message type ${String(value.type)}`);
  }
}

// -- outbound ----------------------------------------------------------------

export function loadChildrenMessage(nodeId: string): string {
  return JSON.stringify({ type: "loadChildren", nodeId });
}

export function getHistoryMessage(index: number): string {
  return JSON.stringify({ type: "getHistory", index });
}

export function stepMessage(kind: StepKind): string {
  return JSON.stringify({ type: "step", kind });
}
