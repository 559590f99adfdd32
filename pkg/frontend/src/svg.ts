// Renders one snapshot as a self-contained SVG string: UML-style object
// boxes with attribute rows, labeled reference edges, and the green/orange
// change overlay taken verbatim from the snapshot's change set.

import type { GraphNode, SnapshotMessage } from "./protocol.js";
import type { Overlay } from "./state.js";
import { linkKey } from "./state.js";
import type { Point } from "./layout.js";

export const COLORS = {
  added: { stroke: "#2e7d32", header: "#c8e6c9" }, // green: new objects/links
  changed: { stroke: "#e65100", header: "#ffe0b2" }, // orange: modified
  neutral: { stroke: "#37474f", header: "#eceff1" },
} as const;

const CHAR_WIDTH = 7.5;
const HEADER_HEIGHT = 24;
const ROW_HEIGHT = 18;
const PAD = 8;

export interface Box extends Point {
  width: number;
  height: number;
}

export function nodeBox(node: GraphNode, origin: Point, rootNames: string[]): Box {
  const texts = [headerText(node, rootNames), ...node.attributes.map(attributeText)];
  const widest = Math.max(...texts.map((t) => t.length), 10);
  return {
    x: origin.x,
    y: origin.y,
    width: Math.ceil(widest * CHAR_WIDTH) + 2 * PAD,
    height: HEADER_HEIGHT + node.attributes.length * ROW_HEIGHT + PAD,
  };
}

function headerText(node: GraphNode, rootNames: string[]): string {
  return `${rootNames.join(", ")}:${node.type}`;
}

function attributeText(attr: { name: string; value: string }): string {
  return `${attr.name} = ${attr.value}`;
}

function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export interface RenderOptions {
  showRemoved?: boolean;
}

export function renderDiagram(
  snapshot: SnapshotMessage,
  positions: ReadonlyMap<string, Point>,
  colors: Overlay,
  options: RenderOptions = {},
): string {
  const rootsByNode = new Map<string, string[]>();
  for (const root of snapshot.graph.roots) {
    if (root.nodeId !== undefined) {
      const names = rootsByNode.get(root.nodeId) ?? [];
      names.push(root.name);
      rootsByNode.set(root.nodeId, names);
    }
  }
  const boxes = new Map<string, Box>();
  for (const node of snapshot.graph.nodes) {
    const origin = positions.get(node.id) ?? { x: 0, y: 0 };
    boxes.set(node.id, nodeBox(node, origin, rootsByNode.get(node.id) ?? []));
  }

  const parts: string[] = [];
  for (const link of snapshot.graph.links) {
    const from = boxes.get(link.source);
    const to = boxes.get(link.target);
    if (!from || !to) continue;
    const color = colors.get(linkKey(link)) === "added" ? COLORS.added : COLORS.neutral;
    const x1 = from.x + from.width / 2;
    const y1 = from.y + from.height / 2;
    const x2 = to.x + to.width / 2;
    const y2 = to.y + to.height / 2;
    const changeClass = colors.get(linkKey(link)) === "added" ? " added" : "";
    parts.push(
      `<g class="link${changeClass}" data-link-id="${escapeXml(linkKey(link))}">` +
        `<line x1="${x1}" y1="${y1}" x2="${x2}" y2="${y2}" stroke="${color.stroke}" ` +
        `stroke-width="1.6" marker-end="url(#arrow)"/>` +
        `<text x="${(x1 + x2) / 2}" y="${(y1 + y2) / 2 - 4}" class="link-label" ` +
        `fill="${color.stroke}">${escapeXml(link.field)}</text></g>`,
    );
  }

  for (const node of snapshot.graph.nodes) {
    const box = boxes.get(node.id)!;
    const state = colors.get(node.id);
    const color = state === "added" ? COLORS.added : state === "changed" ? COLORS.changed : COLORS.neutral;
    const changeClass = state ? ` ${state}` : "";
    const rows = node.attributes
      .map(
        (attr, i) =>
          `<text x="${box.x + PAD}" y="${box.y + HEADER_HEIGHT + (i + 1) * ROW_HEIGHT - 4}" ` +
          `class="attr">${escapeXml(attributeText(attr))}</text>`,
      )
      .join("");
    const hint = node.expanded
      ? ""
      : `<text x="${box.x + box.width - PAD}" y="${box.y + 16}" text-anchor="end" class="hint">+</text>`;
    parts.push(
      `<g class="node${changeClass}" data-node-id="${escapeXml(node.id)}" data-expanded="${node.expanded}">` +
        `<rect x="${box.x}" y="${box.y}" width="${box.width}" height="${box.height}" ` +
        `fill="#ffffff" stroke="${color.stroke}" stroke-width="2" rx="4"/>` +
        `<rect x="${box.x}" y="${box.y}" width="${box.width}" height="${HEADER_HEIGHT}" ` +
        `fill="${color.header}" stroke="${color.stroke}" stroke-width="2" rx="4"/>` +
        `<text x="${box.x + PAD}" y="${box.y + 16}" class="title" text-decoration="underline">` +
        `${escapeXml(headerText(node, rootsByNode.get(node.id) ?? []))}</text>` +
        rows +
        hint +
        `</g>`,
    );
  }

  let graveyardHeight = 0;
  if (options.showRemoved && snapshot.changes.removedNodes.length > 0) {
    const bottom = Math.max(...[...boxes.values()].map((b) => b.y + b.height), 60) + 40;
    let x = 40;
    for (const id of snapshot.changes.removedNodes) {
      const width = Math.ceil(id.length * CHAR_WIDTH) + 2 * PAD;
      parts.push(
        `<g class="node ghost" data-ghost-id="${escapeXml(id)}">` +
          `<rect x="${x}" y="${bottom}" width="${width}" height="${HEADER_HEIGHT}" ` +
          `fill="none" stroke="#b0bec5" stroke-width="1.5" stroke-dasharray="5 4" rx="4"/>` +
          `<text x="${x + PAD}" y="${bottom + 16}" fill="#90a4ae">${escapeXml(id)}</text></g>`,
      );
      x += width + 16;
    }
    graveyardHeight = HEADER_HEIGHT + 40;
  }

  const width = Math.max(...[...boxes.values()].map((b) => b.x + b.width), 300) + 40;
  const height =
    Math.max(...[...boxes.values()].map((b) => b.y + b.height), 120) + 60 + graveyardHeight;
  const where = snapshot.location;
  const caption = `${where.file}:${where.line}${where.method ? ` (${where.method})` : ""}`;
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
    `viewBox="0 0 ${width} ${height}" font-family="ui-monospace, monospace" font-size="12">` +
    `<defs><marker id="arrow" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="7" ` +
    `markerHeight="7" orient="auto-start-reverse"><path d="M 0 0 L 10 5 L 0 10 z" ` +
    `fill="#37474f"/></marker></defs>` +
    parts.join("") +
    `<text x="12" y="${height - 12}" class="caption" fill="#607d8b">${escapeXml(caption)}</text>` +
    `</svg>`
  );
}
