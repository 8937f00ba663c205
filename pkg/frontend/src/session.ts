// WebSocket session management: handshake, per-direction sequence tracking,
// out-of-order rejection, and reconnect with a fresh handshake.

import type { ClientMessage, ServerMessage } from "./protocol.js";

export interface WebSocketLike {
  send(data: string): void;
  close(): void;
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: ((ev: unknown) => void) | null;
  onopen: ((ev: unknown) => void) | null;
}

export type SocketFactory = (url: string) => WebSocketLike;

// Omit that distributes over each member of the message union.
type Unsequenced<T> = T extends { seq: number } ? Omit<T, "seq"> : never;
export type OutgoingMessage = Unsequenced<ClientMessage>;

export interface SessionEvents {
  onHello?: (msg: Extract<ServerMessage, { type: "hello" }>) => void;
  onState?: (msg: Extract<ServerMessage, { type: "state" }>) => void;
  onDone?: (msg: Extract<ServerMessage, { type: "done" }>) => void;
  onError?: (msg: Extract<ServerMessage, { type: "error" }>) => void;
  onClose?: () => void;
}

export class Session {
  private ws: WebSocketLike | null = null;
  private nextSeq = 0;
  private lastServerSeq = -1;
  private handshook = false;
  /** Server messages dropped for arriving out of order. */
  dropped = 0;
  /** Client messages discarded because no handshake was complete. */
  discarded = 0;

  constructor(
    private url: string,
    private factory: SocketFactory,
    private events: SessionEvents = {},
  ) {}

  get isOpen(): boolean {
    return this.ws !== null && this.handshook;
  }

  connect(): void {
    // A reconnect starts a brand-new session: sequence counters reset and
    // any input produced before the new hello arrives is discarded.
    this.ws?.close();
    this.nextSeq = 0;
    this.lastServerSeq = -1;
    this.handshook = false;
    const ws = this.factory(this.url);
    this.ws = ws;
    ws.onmessage = (ev) => this.handleRaw(ev.data);
    ws.onclose = () => {
      if (this.ws === ws) {
        this.ws = null;
        this.handshook = false;
        this.events.onClose?.();
      }
    };
  }

  close(): void {
    this.ws?.close();
    this.ws = null;
    this.handshook = false;
  }

  /** Send a message, stamping the next client sequence number.
   *  Returns the sequence used, or null if the message was discarded. */
  send(msg: OutgoingMessage): number | null {
    if (!this.ws || !this.handshook) {
      this.discarded += 1;
      return null;
    }
    const seq = this.nextSeq++;
    this.ws.send(JSON.stringify({ ...msg, seq }));
    return seq;
  }

  private handleRaw(data: string): void {
    let msg: ServerMessage;
    try {
      msg = JSON.parse(data) as ServerMessage;
    } catch {
      this.dropped += 1;
      return;
    }
    if (typeof msg.seq !== "number" || msg.seq <= this.lastServerSeq) {
      this.dropped += 1;
      return;
    }
    this.lastServerSeq = msg.seq;
    switch (msg.type) {
      case "hello":
        this.handshook = true;
        this.events.onHello?.(msg);
        break;
      case "state":
        this.events.onState?.(msg);
        break;
      case "done":
        this.events.onDone?.(msg);
        break;
      case "error":
        this.events.onError?.(msg);
        break;
      case "ack":
        break;
    }
  }
}
