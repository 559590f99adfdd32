// WebSocket client: parses every frame, dispatches actions, keeps the
// connection on schema violations (they surface as a banner instead).

import { parseServerMessage, SchemaError } from "./protocol.js";
import type { Action } from "./state.js";

export interface Connection {
  send(payload: string): void;
  close(): void;
}

export function connect(url: string, dispatch: (action: Action) => void): Connection {
  const socket = new WebSocket(url);
  socket.onopen = () => dispatch({ kind: "connected" });
  socket.onclose = () => dispatch({ kind: "disconnected" });
  socket.onerror = () => dispatch({ kind: "disconnected" });
  socket.onmessage = (event) => {
    try {
      dispatch({ kind: "server", message: parseServerMessage(String(event.data)) });
    } catch (error) {
      if (error instanceof SchemaError || error instanceof SyntaxError) {
        dispatch({ kind: "schemaViolation", detail: error.message });
      } else {
        throw error;
      }
    }
  };
  return {
    send: (payload) => {
      if (socket.readyState === WebSocket.OPEN) socket.send(payload);
    },
    close: () => socket.close(),
  };
}
