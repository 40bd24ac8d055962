import { describe, expect, it } from "vitest";

import { fmtBytes, hudModel, newStageWindows, pushFrame, RollingStats,
  WINDOW_SIZE } from "../src/hud.js";
import { FrameResult } from "../src/render.js";

function fakeFrame(over: Partial<FrameResult> = {}): FrameResult {
  return {
    target: new Float32Array(4),
    width: 1,
    height: 1,
    visibleCount: 7,
    fragmentsEvaluated: 42,
    preprocessMs: 1,
    sortMs: 2,
    renderMs: 3,
    totalMs: 6,
    timestampValid: true,
    ...over,
  };
}

describe("RollingStats", () => {
  it("returns the constant for a constant window", () => {
    const s = new RollingStats();
    for (let i = 0; i < WINDOW_SIZE; i++) s.push(8.25);
    expect(s.count).toBe(120);
    expect(s.median()).toBe(8.25);
    expect(s.p99()).toBe(8.25);
  });

  it("uses the lower middle for even counts and nearest-rank p99", () => {
    const s = new RollingStats();
    for (const v of [5, 1, 3]) s.push(v);
    expect(s.median()).toBe(3); // sorted [1,3,5]
    expect(s.p99()).toBe(5); // ceil(0.99*3) = 3 -> last

    const t = new RollingStats();
    for (let v = 1; v <= 100; v++) t.push(v);
    expect(t.median()).toBe(50); // lower middle of 1..100
    expect(t.p99()).toBe(99); // rank ceil(99) = 99
  });

  it("evicts oldest samples once the window is full", () => {
    const s = new RollingStats(4);
    for (const v of [1, 2, 3, 4, 5, 6]) s.push(v);
    expect(s.count).toBe(4);
    expect(s.median()).toBe(4); // window holds 3..6
    s.clear();
    expect(s.count).toBe(0);
    expect(Number.isNaN(s.median())).toBe(true);
  });

  it("rejects degenerate capacities", () => {
    expect(() => new RollingStats(0)).toThrow(RangeError);
  });
});

describe("hudModel", () => {
  it("reports counts, stage shares, and window stats", () => {
    const w = newStageWindows();
    for (let i = 0; i < 10; i++) pushFrame(w, fakeFrame());
    const model = hudModel(w, 12345, fakeFrame(), 2048);
    expect(model.splatLine).toBe("12345 splats");
    expect(model.visibleLine).toContain("7 visible");
    expect(model.memoryLine).toBe("scene 2.0 KiB");
    expect(model.caveat).toBe(false);
    expect(model.stages.length).toBe(3);
    expect(model.stages[0].label).toBe("preprocess");
    expect(model.stages[2].share).toBeCloseTo(0.5, 12); // 3ms of 6ms
    expect(model.frameLine).toContain("10 samples");
  });

  it("drops stage bars and flags the caveat without valid timestamps", () => {
    const w = newStageWindows();
    const frame = fakeFrame({ timestampValid: false });
    pushFrame(w, frame);
    const model = hudModel(w, 1, frame, 0);
    expect(model.caveat).toBe(true);
    expect(model.stages.length).toBe(0);
    expect(model.frameLine).toContain("ms"); // host total still reported
  });
});

describe("fmtBytes", () => {
  it("picks sensible units", () => {
    expect(fmtBytes(12)).toBe("12 B");
    expect(fmtBytes(2048)).toBe("2.0 KiB");
    expect(fmtBytes(3 * 1024 * 1024)).toBe("3.0 MiB");
  });
});
