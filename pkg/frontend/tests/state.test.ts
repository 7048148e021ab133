import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { Debouncer, EditorStore } from "../src/state.js";
import type { LightsResponse, WireLight } from "../src/api.js";

function wire(id: number, dir: [number, number, number]): WireLight {
  return { id, color: [1, 1, 1], direction: dir, sigma: 0.4 };
}

describe("EditorStore revision gating", () => {
  it("applies newer responses and discards stale ones", () => {
    const store = new EditorStore();
    const first: LightsResponse = { lights: [wire(0, [0, 0, 1])], revision: 3 };
    expect(store.applyLights(first)).toBe(true);
    expect(store.revision).toBe(3);

    const stale: LightsResponse = { lights: [], revision: 2 };
    expect(store.applyLights(stale)).toBe(false);
    expect(store.lights).toHaveLength(1);

    expect(store.applyPatched(wire(0, [1, 0, 0]), 3)).toBe(false); // same revision: stale
    expect(store.applyPatched(wire(0, [1, 0, 0]), 4)).toBe(true);
    expect(store.lights[0]?.lon).toBeCloseTo(90, 6);
  });

  it("keeps the selection across acknowledged updates", () => {
    const store = new EditorStore();
    store.applyLights({ lights: [wire(0, [0, 0, 1]), wire(1, [1, 0, 0])], revision: 1 });
    store.select(1);
    store.applyLights({ lights: [wire(0, [0, 0, 1]), wire(1, [0, 1, 0])], revision: 2 });
    expect(store.selected()?.id).toBe(1);
    expect(store.applyRemoved(1, 3)).toBe(true);
    expect(store.selected()).toBeUndefined();
  });
});

describe("Debouncer", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });
  afterEach(() => {
    vi.useRealTimers();
  });

  it("caps the call rate at one per interval, keeping the last action", () => {
    const calls: number[] = [];
    const debounce = new Debouncer(100);
    for (let t = 0; t < 1000; t += 10) {
      const value = t;
      debounce.schedule(() => calls.push(value));
      vi.advanceTimersByTime(10);
    }
    vi.runAllTimers();
    // 1 second of 10ms-spaced events through a 100ms debouncer: <= 11 calls
    expect(calls.length).toBeLessThanOrEqual(11);
    expect(calls.length).toBeGreaterThanOrEqual(9);
    expect(calls[calls.length - 1]).toBe(990);
  });

  it("flush fires the pending action immediately", () => {
    const calls: string[] = [];
    const debounce = new Debouncer(100);
    debounce.schedule(() => calls.push("a"));
    vi.runAllTimers();
    debounce.schedule(() => calls.push("b"));
    debounce.flush();
    expect(calls).toEqual(["a", "b"]);
  });
});
