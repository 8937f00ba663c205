// View model: the latest server state folded into what the renderer draws.

import {
  CONTEXT_LABELS,
  type MetricsSummary,
  type PegState,
  type ServerMessage,
  type ToolState,
} from "./protocol.js";

export interface ViewModel {
  connected: boolean;
  running: boolean;
  clock: number;
  mode: string;
  phase: string;
  tools: { left: ToolState; right: ToolState } | null;
  peg: PegState | null;
  alpha: number;
  probs: number[] | null;
  contextLabel: string;
  engaged: boolean;
  success: boolean;
  metrics: MetricsSummary | null;
  lastStateSeq: number;
  /** State messages discarded for being older than one already applied. */
  staleDropped: number;
  statusLine: string;
}

export function initialView(): ViewModel {
  return {
    connected: false,
    running: false,
    clock: 0,
    mode: "",
    phase: "",
    tools: null,
    peg: null,
    alpha: 1,
    probs: null,
    contextLabel: CONTEXT_LABELS[0],
    engaged: false,
    success: false,
    metrics: null,
    lastStateSeq: -1,
    staleDropped: 0,
    statusLine: "connecting…",
  };
}

/** Fold one server message into the view model (mutates and returns it). */
export function applyMessage(view: ViewModel, msg: ServerMessage): ViewModel {
  switch (msg.type) {
    case "hello":
      view.connected = true;
      view.mode = msg.mode;
      view.lastStateSeq = -1;
      view.statusLine = `connected (${msg.mode}, ${msg.tick_rate} Hz)`;
      break;
    case "state": {
      if (msg.seq <= view.lastStateSeq) {
        view.staleDropped += 1;
        break;
      }
      view.lastStateSeq = msg.seq;
      view.running = msg.running;
      view.clock = msg.clock;
      view.mode = msg.mode;
      view.phase = msg.phase;
      view.tools = msg.tools;
      view.peg = msg.peg;
      view.alpha = msg.alpha;
      view.probs = msg.probs;
      view.contextLabel = CONTEXT_LABELS[msg.context] ?? `context ${msg.context}`;
      view.engaged = msg.engaged;
      view.success = msg.success;
      view.metrics = msg.metrics;
      view.statusLine = msg.running ? `running: ${msg.phase}` : "paused";
      break;
    }
    case "done":
      view.running = false;
      view.success = msg.success;
      view.metrics = msg.metrics;
      view.statusLine = msg.success ? "task complete" : "task failed";
      break;
    case "error":
      view.statusLine = `error: ${msg.message}`;
      break;
    case "ack":
      break;
  }
  return view;
}
