import { describe, expect, it } from "vitest";
import type { ServerMessage } from "../src/protocol.js";
import { Session, type WebSocketLike } from "../src/session.js";

class FakeSocket implements WebSocketLike {
  sent: string[] = [];
  closed = false;
  onmessage: ((ev: { data: string }) => void) | null = null;
  onclose: ((ev: unknown) => void) | null = null;
  onopen: ((ev: unknown) => void) | null = null;

  send(data: string): void {
    this.sent.push(data);
  }
  close(): void {
    this.closed = true;
    this.onclose?.({});
  }
  receive(msg: ServerMessage): void {
    this.onmessage?.({ data: JSON.stringify(msg) });
  }
}

function hello(seq = 0): ServerMessage {
  return { type: "hello", seq, protocol: 1, tick_rate: 50, dt: 0.01, mode: "shared" };
}

function makeSession(events = {}) {
  const sockets: FakeSocket[] = [];
  const session = new Session(
    "ws://test/session",
    () => {
      const s = new FakeSocket();
      sockets.push(s);
      return s;
    },
    events,
  );
  return { session, sockets };
}

describe("Session", () => {
  it("discards input sent before the handshake", () => {
    const { session, sockets } = makeSession();
    session.connect();
    const seq = session.send({ type: "control", action: "start" });
    expect(seq).toBeNull();
    expect(session.discarded).toBe(1);
    expect(sockets[0].sent).toHaveLength(0);
  });

  it("stamps strictly increasing client sequence numbers after hello", () => {
    const { session, sockets } = makeSession();
    session.connect();
    sockets[0].receive(hello());
    const a = session.send({ type: "control", action: "start" });
    const b = session.send({
      type: "input",
      dp: { left: [0.001, 0, 0] },
      clutch: false,
      grip: {},
      client_time: 0,
    });
    expect([a, b]).toEqual([0, 1]);
    const sent = sockets[0].sent.map((s) => JSON.parse(s));
    expect(sent.map((m) => m.seq)).toEqual([0, 1]);
  });

  it("drops out-of-order and malformed server messages", () => {
    const states: number[] = [];
    const { session, sockets } = makeSession({
      onState: (m: Extract<ServerMessage, { type: "state" }>) => states.push(m.seq),
    });
    session.connect();
    const sock = sockets[0];
    sock.receive(hello(0));
    const state = (seq: number): ServerMessage =>
      ({
        type: "state",
        seq,
        clock: 0.01,
        running: true,
        tools: {
          left: { p: [0, 0, 0], q: [1, 0, 0, 0], grip: false },
          right: { p: [0, 0, 0], q: [1, 0, 0, 0], grip: false },
        },
        peg: { p: [0, 0, 0], held_by: null, site: 1 },
        alpha: 1,
        probs: null,
        context: 0,
        engaged: false,
        mode: "manual",
        phase: "R_APPROACH_1",
        success: false,
        metrics: { M: 0, T: 0, A: 0, C: 0 },
      }) as ServerMessage;
    sock.receive(state(1));
    sock.receive(state(3));
    sock.receive(state(2)); // stale: must be dropped
    sock.onmessage?.({ data: "not json" });
    expect(states).toEqual([1, 3]);
    expect(session.dropped).toBe(2);
  });

  it("reconnects with fresh sequence counters and a new handshake", () => {
    const { session, sockets } = makeSession();
    session.connect();
    sockets[0].receive(hello());
    session.send({ type: "control", action: "start" });
    session.connect(); // reconnect
    expect(sockets).toHaveLength(2);
    expect(session.isOpen).toBe(false);
    // input before the new hello is stale and discarded
    expect(session.send({ type: "control", action: "start" })).toBeNull();
    sockets[1].receive(hello(0));
    expect(session.send({ type: "control", action: "start" })).toBe(0);
  });

  it("reports closure and clears the open flag", () => {
    let closed = 0;
    const { session, sockets } = makeSession({ onClose: () => (closed += 1) });
    session.connect();
    sockets[0].receive(hello());
    expect(session.isOpen).toBe(true);
    sockets[0].close();
    expect(closed).toBe(1);
    expect(session.isOpen).toBe(false);
  });
});
