// Browser entry point: wires DOM events into the pure input/view modules and
// drives the session at the server tick rate.

import { captureInput, emptySample, type InputConfig } from "./input.js";
import type { Arm } from "./protocol.js";
import { defaultRenderConfig, render } from "./render.js";
import { Session, type WebSocketLike } from "./session.js";
import { applyMessage, initialView } from "./view.js";

function param(name: string, fallback: string): string {
  return new URLSearchParams(window.location.search).get(name) ?? fallback;
}

const serverUrl = param("server", "ws://127.0.0.1:8000/session");
const arm = (param("arm", "left") === "right" ? "right" : "left") as Arm;
const inputCfg: InputConfig = {
  arm,
  metersPerPixel: Number(param("scale", "0.0002")),
  metersPerWheel: Number(param("wheel", "0.001")),
};

const canvas = document.getElementById("board") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const renderCfg = defaultRenderConfig();
const view = initialView();
const grip = { closed: false };
let sample = emptySample();
let tickMs = 20;
let timer: ReturnType<typeof setInterval> | null = null;

// A browser WebSocket satisfies the interface at runtime; the cast bridges
// the stricter DOM event types.
const makeSocket = (url: string): WebSocketLike =>
  new WebSocket(url) as unknown as WebSocketLike;

const session = new Session(serverUrl, makeSocket, {
  onHello: (msg) => {
    applyMessage(view, msg);
    tickMs = 1000 / msg.tick_rate;
    if (timer !== null) clearInterval(timer);
    timer = setInterval(tick, tickMs);
    session.send({ type: "control", action: "start" });
  },
  onState: (msg) => applyMessage(view, msg),
  onDone: (msg) => applyMessage(view, msg),
  onError: (msg) => applyMessage(view, msg),
  onClose: () => {
    view.connected = false;
    view.statusLine = "disconnected — reconnecting…";
    setTimeout(() => session.connect(), 1000);
  },
});

canvas.addEventListener("pointermove", (ev) => {
  if (document.pointerLockElement === canvas || ev.buttons & 1) {
    sample.pointerDx += ev.movementX;
    sample.pointerDy += ev.movementY;
  }
});
canvas.addEventListener("click", () => canvas.requestPointerLock());
canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  sample.wheelDz += Math.sign(-ev.deltaY);
});
window.addEventListener("keydown", (ev) => {
  if (ev.code === "Space" && !ev.repeat) sample.clutchHeld = true;
  if (ev.code === "KeyG" && !ev.repeat) sample.gripToggled = true;
  if (ev.code === "KeyP") session.send({ type: "control", action: "pause" });
  if (ev.code === "KeyR") session.send({ type: "control", action: "reset" });
});
window.addEventListener("keyup", (ev) => {
  if (ev.code === "Space") sample.clutchHeld = false;
});

function tick(): void {
  const clutchHeld = sample.clutchHeld;
  const payload = captureInput(sample, inputCfg, grip);
  sample = emptySample();
  sample.clutchHeld = clutchHeld; // key level persists across ticks
  if (payload !== null) {
    session.send({
      type: "input",
      ...payload,
      client_time: performance.now() / 1000,
    });
  }
}

function frame(): void {
  render(ctx, view, renderCfg);
  requestAnimationFrame(frame);
}

session.connect();
requestAnimationFrame(frame);
