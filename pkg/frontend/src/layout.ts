// Deterministic object-diagram placement: breadth-first layering from the
// root bindings (one column per layer), sticky positions for surviving ids
// so the diagram stays calm across updates.

import type { GraphDoc } from "./protocol.js";

export interface Point {
  x: number;
  y: number;
}

export const COLUMN_WIDTH = 260;
export const ROW_HEIGHT = 150;
export const MARGIN = 40;

export function layout(graph: GraphDoc, previous: ReadonlyMap<string, Point>): Map<string, Point> {
  const layers = bfsLayers(graph);
  const positions = new Map<string, Point>();
  const occupied = new Set<string>();
  const keyOf = (p: Point) => `${p.x}:${p.y}`;

  for (const node of graph.nodes) {
    const kept = previous.get(node.id);
    if (kept) {
      positions.set(node.id, kept);
      occupied.add(keyOf(kept));
    }
  }
  const rows: number[] = [];
  for (const node of graph.nodes) {
    if (positions.has(node.id)) continue;
    const column = layers.get(node.id) ?? 0;
    let row = rows[column] ?? 0;
    let point: Point;
    do {
      point = {
        x: MARGIN + column * COLUMN_WIDTH,
        y: MARGIN + row * ROW_HEIGHT,
      };
      row += 1;
    } while (occupied.has(keyOf(point)));
    rows[column] = row;
    positions.set(node.id, point);
    occupied.add(keyOf(point));
  }
  return positions;
}

function bfsLayers(graph: GraphDoc): Map<string, number> {
  const outgoing = new Map<string, string[]>();
  for (const link of graph.links) {
    const targets = outgoing.get(link.source) ?? [];
    targets.push(link.target);
    outgoing.set(link.source, targets);
  }
  const layers = new Map<string, number>();
  let frontier: string[] = [];
  for (const root of graph.roots) {
    if (root.nodeId !== undefined && !layers.has(root.nodeId)) {
      layers.set(root.nodeId, 0);
      frontier.push(root.nodeId);
    }
  }
  while (frontier.length > 0) {
    const next: string[] = [];
    for (const id of frontier) {
      for (const target of outgoing.get(id) ?? []) {
        if (!layers.has(target)) {
          layers.set(target, (layers.get(id) ?? 0) + 1);
          next.push(target);
        }
      }
    }
    frontier = next;
  }
  // disconnected leftovers go to a trailing column
  const fallback = Math.max(0, ...layers.values()) + 1;
  for (const node of graph.nodes) {
    if (!layers.has(node.id)) layers.set(node.id, fallback);
  }
  return layers;
}
