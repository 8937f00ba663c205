import { describe, expect, it } from "vitest";
import { captureInput, emptySample, type InputConfig } from "../src/input.js";

const cfg: InputConfig = {
  arm: "left",
  metersPerPixel: 0.0001, // 0.1 mm per pixel
  metersPerWheel: 0.001,
};

describe("captureInput", () => {
  it("scales pointer pixels to metres for the selected arm", () => {
    const s = emptySample();
    s.pointerDx = 10;
    const out = captureInput(s, cfg, { closed: false })!;
    expect(out.dp.left).toEqual([0.001, -0, 0]); // 10 px at 0.1 mm/px = 1 mm
    expect(out.dp.right).toBeUndefined();
    expect(out.clutch).toBe(false);
  });

  it("maps screen-down pointer motion to negative world y", () => {
    const s = emptySample();
    s.pointerDy = 5;
    const out = captureInput(s, cfg, { closed: false })!;
    expect(out.dp.left![1]).toBeCloseTo(-0.0005, 10);
  });

  it("drives the third axis from the wheel", () => {
    const s = emptySample();
    s.wheelDz = -2;
    const out = captureInput(s, cfg, { closed: false })!;
    expect(out.dp.left).toEqual([0, -0, -0.002]);
  });

  it("targets the configured arm", () => {
    const s = emptySample();
    s.pointerDx = 1;
    const out = captureInput(s, { ...cfg, arm: "right" }, { closed: false })!;
    expect(out.dp.right).toBeDefined();
    expect(out.dp.left).toBeUndefined();
  });

  it("zeroes the increment while the clutch is held", () => {
    const s = emptySample();
    s.pointerDx = 50;
    s.pointerDy = -20;
    s.wheelDz = 3;
    s.clutchHeld = true;
    const out = captureInput(s, cfg, { closed: false })!;
    expect(out.dp.left).toEqual([0, 0, 0]);
    expect(out.clutch).toBe(true);
  });

  it("toggles the persistent grip state on each edge", () => {
    const grip = { closed: false };
    const s1 = emptySample();
    s1.gripToggled = true;
    const out1 = captureInput(s1, cfg, grip)!;
    expect(out1.grip.left).toBe(true);
    expect(grip.closed).toBe(true);
    const s2 = emptySample();
    s2.gripToggled = true;
    const out2 = captureInput(s2, cfg, grip)!;
    expect(out2.grip.left).toBe(false);
    expect(grip.closed).toBe(false);
  });

  it("forwards grip toggles even while clutched", () => {
    const s = emptySample();
    s.clutchHeld = true;
    s.gripToggled = true;
    const out = captureInput(s, cfg, { closed: false })!;
    expect(out.grip.left).toBe(true);
    expect(out.dp.left).toEqual([0, 0, 0]);
  });

  it("suppresses idle ticks entirely", () => {
    expect(captureInput(emptySample(), cfg, { closed: false })).toBeNull();
  });
});
