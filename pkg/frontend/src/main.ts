// DOM bootstrap: one store, one render function, event wiring.

import { getHistoryMessage } from "./protocol.js";
import type { StepKind } from "./protocol.js";
import { layout } from "./layout.js";
import type { Point } from "./layout.js";
import { renderDiagram } from "./svg.js";
import { download, exportGraphDocument, exportSvg } from "./export.js";
import {
  controls,
  expansionRequest,
  initialState,
  overlay,
  reduce,
  stepRequest,
} from "./state.js";
import type { Action, ViewState } from "./state.js";
import { connect } from "./ws.js";

const $ = <T extends HTMLElement>(selector: string): T => {
  const element = document.querySelector<T>(selector);
  if (!element) throw new Error(`missing element ${selector}`);
  return element;
};

let state: ViewState = initialState();
let positions: Map<string, Point> = new Map();

const socket = connect(`ws://${location.host}/`, dispatch);

function dispatch(action: Action): void {
  state = reduce(state, action);
  render();
}

function render(): void {
  const snapshot = state.viewing;
  const canvas = $("#diagram");
  if (snapshot) {
    positions = layout(snapshot.graph, positions);
    canvas.innerHTML = renderDiagram(snapshot, positions, overlay(snapshot), {
      showRemoved: state.showRemoved,
    });
  } else {
    canvas.innerHTML = '<p class="placeholder">waiting for the first stop…</p>';
  }

  const where = snapshot?.location;
  $("#location").textContent = where
    ? `${where.file}:${where.line}${where.method ? ` · ${where.method}` : ""}`
    : "–";
  $("#connection").textContent = state.terminated ? "terminated" : state.connection;
  $("#step-seq").textContent = snapshot ? `step ${snapshot.stepSeq}` : "";

  const enabled = controls(state);
  document
    .querySelectorAll<HTMLButtonElement>("[data-step]")
    .forEach((button) => (button.disabled = !enabled.step));
  const slider = $<HTMLInputElement>("#history");
  const historyLength = state.live?.historyLength ?? 0;
  slider.max = String(Math.max(historyLength - 1, 0));
  slider.value = String(state.historyIndex);
  slider.disabled = !enabled.history;
  $("#history-label").textContent =
    state.historyIndex > 0 ? `history −${state.historyIndex}` : "live";
  $("#historical-banner").hidden = state.historyIndex === 0;

  const toast = $("#toast");
  toast.textContent = state.toast ?? "";
  toast.hidden = state.toast === null;
}

$("#diagram").addEventListener("dblclick", (event) => {
  const target = (event.target as Element).closest("[data-node-id]");
  if (!target) return;
  const request = expansionRequest(state, target.getAttribute("data-node-id")!);
  if (request) socket.send(request);
});

document.querySelectorAll<HTMLButtonElement>("[data-step]").forEach((button) => {
  button.addEventListener("click", () => {
    const request = stepRequest(state, button.dataset.step as StepKind);
    if (request) socket.send(request);
  });
});

$<HTMLInputElement>("#history").addEventListener("input", (event) => {
  const index = Number((event.target as HTMLInputElement).value);
  if (index === 0) {
    dispatch({ kind: "viewLive" });
  } else {
    socket.send(getHistoryMessage(index));
  }
});

$("#export-svg").addEventListener("click", () => {
  if (state.viewing) download(exportSvg(state.viewing, positions, overlay(state.viewing)));
});

$("#export-doc").addEventListener("click", () => {
  if (state.viewing) download(exportGraphDocument(state.viewing));
});

$("#toast").addEventListener("click", () => dispatch({ kind: "dismissToast" }));

$<HTMLInputElement>("#show-removed").addEventListener("change", () =>
  dispatch({ kind: "toggleRemoved" }),
);

render();
