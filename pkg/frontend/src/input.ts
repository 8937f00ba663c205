// Pure input capture: turns accumulated pointer/wheel/key state into one
// input message payload per tick. No DOM access here so it is unit-testable.

import type { Arm, Vec3 } from "./protocol.js";

export interface InputSample {
  /** Pointer movement since the last tick, in pixels (screen x right, y down). */
  pointerDx: number;
  pointerDy: number;
  /** Wheel movement since the last tick, in scroll units. */
  wheelDz: number;
  /** Clutch key currently held. */
  clutchHeld: boolean;
  /** Grip toggle pressed since the last tick (edge, not level). */
  gripToggled: boolean;
}

export interface InputConfig {
  /** Which arm this client drives. */
  arm: Arm;
  /** Metres of master motion per pixel of pointer motion. */
  metersPerPixel: number;
  /** Metres of vertical motion per wheel unit. */
  metersPerWheel: number;
}

export interface InputPayload {
  dp: Partial<Record<Arm, Vec3>>;
  clutch: boolean;
  grip: Partial<Record<Arm, boolean>>;
}

export interface GripState {
  closed: boolean;
}

/**
 * Convert one tick of raw device motion into a master increment.
 *
 * Screen x maps to world x, screen y (down) maps to world -y, and the wheel
 * drives world z. While the clutch is held the increment is forced to zero so
 * the operator can reposition the physical device without moving the tool.
 * Grip toggles flip the persistent grip state and are always forwarded, even
 * mid-clutch. Returns null when there is nothing to send this tick.
 */
export function captureInput(
  sample: InputSample,
  cfg: InputConfig,
  grip: GripState,
): InputPayload | null {
  let dp: Vec3 = [
    sample.pointerDx * cfg.metersPerPixel,
    -sample.pointerDy * cfg.metersPerPixel,
    sample.wheelDz * cfg.metersPerWheel,
  ];
  if (sample.clutchHeld) {
    dp = [0, 0, 0];
  }
  const gripMsg: Partial<Record<Arm, boolean>> = {};
  if (sample.gripToggled) {
    grip.closed = !grip.closed;
    gripMsg[cfg.arm] = grip.closed;
  }
  const moved = dp[0] !== 0 || dp[1] !== 0 || dp[2] !== 0;
  if (!moved && !sample.gripToggled && !sample.clutchHeld) {
    return null; // idle tick: suppress the message entirely
  }
  return { dp: { [cfg.arm]: dp }, clutch: sample.clutchHeld, grip: gripMsg };
}

/** Fresh accumulator for between-tick device events. */
export function emptySample(): InputSample {
  return {
    pointerDx: 0,
    pointerDy: 0,
    wheelDz: 0,
    clutchHeld: false,
    gripToggled: false,
  };
}
