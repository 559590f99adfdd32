// Diagram export: the SVG as rendered, and the graph document (the same
// shape the bridge serializes, reassembled from the snapshot payload).

import type { SnapshotMessage } from "./protocol.js";
import type { Point } from "./layout.js";
import type { Overlay } from "./state.js";
import { renderDiagram } from "./svg.js";

export interface ExportFile {
  filename: string;
  mime: string;
  content: string;
}

export function exportSvg(
  snapshot: SnapshotMessage,
  positions: ReadonlyMap<string, Point>,
  colors: Overlay,
): ExportFile {
  return {
    filename: `object-diagram-step${snapshot.stepSeq}.svg`,
    mime: "image/svg+xml",
    content: renderDiagram(snapshot, positions, colors),
  };
}

export function exportGraphDocument(snapshot: SnapshotMessage): ExportFile {
  const document = {
    location: snapshot.location,
    roots: snapshot.graph.roots,
    nodes: snapshot.graph.nodes,
    links: snapshot.graph.links,
  };
  return {
    filename: `object-graph-step${snapshot.stepSeq}.json`,
    mime: "application/json",
    content: JSON.stringify(document, null, 2),
  };
}

export function download(file: ExportFile): void {
  const blob = new Blob([file.content], { type: file.mime });
  const url = URL.createObjectURL(blob);
  const anchor = document.createElement("a");
  anchor.download = file.filename;
  anchor.href = url;
  anchor.click();
  URL.revokeObjectURL(url);
}
