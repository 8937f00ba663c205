// JSON wire protocol of the session bridge. One message per frame, each
// carrying a strictly increasing per-direction sequence number.

export type Arm = "left" | "right";

export type Vec3 = [number, number, number];

export interface ToolState {
  p: Vec3;
  q: [number, number, number, number];
  grip: boolean;
}

export interface PegState {
  p: Vec3;
  held_by: Arm | null;
  site: number | null;
}

export interface MetricsSummary {
  M: number;
  T: number;
  A: number;
  C: number;
}

export type ServerMessage =
  | {
      type: "hello";
      seq: number;
      protocol: number;
      tick_rate: number;
      dt: number;
      mode: string;
    }
  | {
      type: "state";
      seq: number;
      clock: number;
      running: boolean;
      tools: Record<Arm, ToolState>;
      peg: PegState;
      alpha: number;
      probs: number[] | null;
      context: number;
      engaged: boolean;
      mode: string;
      phase: string;
      success: boolean;
      metrics: MetricsSummary;
    }
  | { type: "ack"; seq: number; of: number }
  | { type: "error"; seq: number; message: string }
  | { type: "done"; seq: number; success: boolean; metrics: MetricsSummary };

export type ClientMessage =
  | {
      type: "input";
      seq: number;
      dp: Partial<Record<Arm, Vec3>>;
      clutch: boolean;
      grip: Partial<Record<Arm, boolean>>;
      client_time: number;
    }
  | {
      type: "control";
      seq: number;
      action: "start" | "pause" | "reset" | "mode";
      mode?: string;
    };

export const CONTEXT_LABELS = [
  "move to next target",
  "bimanual operation",
  "local operation",
] as const;
