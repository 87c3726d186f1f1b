import { describe, expect, it } from "vitest";
import { cellColor, heatmapModel } from "../src/heatmap";
import type { ArrayFrame } from "../src/types";

function frame(over: Partial<ArrayFrame> = {}): ArrayFrame {
  return {
    tick: 42,
    setpoints: new Array(9).fill(30),
    measured: new Array(9).fill(30),
    currents: new Array(9).fill(0),
    external: new Array(9).fill(30),
    mode: "idle",
    clamp_count: 0,
    warnings: [],
    fault: false,
    ...over,
  };
}

describe("cellColor", () => {
  it("is neutral at ambient", () => {
    expect(cellColor(30, 30)).toBe("rgb(236, 236, 236)");
  });

  it("saturates at the envelope edges", () => {
    expect(cellColor(45, 30)).toBe("rgb(214, 48, 31)");
    expect(cellColor(15, 30)).toBe("rgb(33, 102, 172)");
  });

  it("clamps beyond the envelope", () => {
    expect(cellColor(80, 30)).toBe(cellColor(45, 30));
    expect(cellColor(-10, 30)).toBe(cellColor(15, 30));
  });

  it("scale follows the ambient, not absolute temperature", () => {
    expect(cellColor(25, 25)).toBe(cellColor(30, 30));
    expect(cellColor(40, 25)).toBe(cellColor(45, 30));
  });

  it("warm side reddens monotonically", () => {
    const red = (c: string) => Number(c.match(/rgb\((\d+)/)![1]);
    const parseG = (c: string) => Number(c.match(/rgb\(\d+, (\d+)/)![1]);
    let prev = parseG(cellColor(30, 30));
    for (let t = 31; t <= 45; t += 1) {
      const g = parseG(cellColor(t, 30));
      expect(g).toBeLessThanOrEqual(prev);
      prev = g;
    }
    expect(red(cellColor(37, 30))).toBeGreaterThan(red(cellColor(30, 30) /* neutral */) - 256);
  });
});

describe("heatmapModel", () => {
  it("mirrors the frame cell by cell", () => {
    const setpoints = [30, 30, 30, 30, 30, 30, 38, 38, 38];
    const measured = [30.1, 29.9, 30, 30, 30, 30, 31.2, 31.4, 31.1];
    const model = heatmapModel(frame({ setpoints, measured }), 30);
    expect(model.cells).toHaveLength(9);
    model.cells.forEach((cell, i) => {
      expect(cell.index).toBe(i);
      expect(cell.measured).toBe(measured[i]);
      expect(cell.target).toBe(setpoints[i]);
      expect(cell.fill).toBe(cellColor(measured[i], 30));
      expect(cell.targetFill).toBe(cellColor(setpoints[i], 30));
    });
    expect(model.tick).toBe(42);
  });

  it("derived model is frozen; no client-side mutation", () => {
    const model = heatmapModel(frame(), 30);
    expect(Object.isFrozen(model)).toBe(true);
    expect(Object.isFrozen(model.cells)).toBe(true);
    expect(Object.isFrozen(model.cells[0])).toBe(true);
  });
});
