import { describe, expect, it } from "vitest";

import {
  angleBetweenDeg,
  dirToLonLat,
  dirToPixel,
  lonLatToDir,
  normalize,
  pixelToDir,
} from "../src/convert.js";
import { fromWire, markerPixel } from "../src/state.js";
import type { WireLight } from "../src/api.js";

const W = 256;
const H = 128;

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

describe("equirectangular convention", () => {
  it("panorama center faces forward", () => {
    const d = pixelToDir(W / 2, H / 2, W, H);
    expect(d.x).toBeCloseTo(0, 12);
    expect(d.y).toBeCloseTo(0, 12);
    expect(d.z).toBeCloseTo(1, 12);
  });

  it("top row is the zenith and the east quarter is +x", () => {
    const top = pixelToDir(W / 2, 0, W, H);
    expect(top.y).toBeCloseTo(1, 12);
    const east = pixelToDir((3 * W) / 4, H / 2, W, H);
    expect(east.x).toBeCloseTo(1, 12);
  });

  it("pixel -> direction -> pixel round-trips within 1e-6 away from poles", () => {
    const rand = mulberry32(42);
    for (let i = 0; i < 1000; i++) {
      const u = rand() * W;
      const v = 1 + rand() * (H - 2);
      const d = pixelToDir(u, v, W, H);
      const back = dirToPixel(d, W, H);
      const du = Math.min(Math.abs(back.u - u), W - Math.abs(back.u - u));
      expect(du).toBeLessThan(1e-6);
      expect(Math.abs(back.v - v)).toBeLessThan(1e-6);
    }
  });

  it("lon/lat display form is lossless", () => {
    const rand = mulberry32(7);
    for (let i = 0; i < 500; i++) {
      const d = normalize({ x: rand() - 0.5, y: rand() - 0.5, z: rand() - 0.5 });
      const { lon, lat } = dirToLonLat(d);
      const back = lonLatToDir(lon, lat);
      // 1e-4 deg is the acos noise floor, ~10^4 times below one pixel
      expect(angleBetweenDeg(d, back)).toBeLessThan(1e-4);
    }
  });

  it("zero vectors are rejected", () => {
    expect(() => normalize({ x: 0, y: 0, z: 0 })).toThrow();
  });
});

describe("marker round trip through the wire schema", () => {
  it("wire light -> marker pixel -> direction stays within one pixel", () => {
    const rand = mulberry32(99);
    for (let i = 0; i < 500; i++) {
      const d = normalize({
        x: rand() - 0.5,
        y: (rand() - 0.5) * 1.8,
        z: rand() - 0.5,
      });
      const wire: WireLight = {
        id: i,
        color: [1, 1, 1],
        direction: [d.x, d.y, d.z],
        sigma: 0.4,
      };
      const ui = fromWire(wire);
      const { u, v } = markerPixel(ui, W, H);
      const back = pixelToDir(u, v, W, H);
      // a one-pixel error at this size is ~1.4 degrees of arc
      expect(angleBetweenDeg(d, back)).toBeLessThan(1.4);
      expect(u).toBeGreaterThanOrEqual(0);
      expect(u).toBeLessThan(W);
      expect(v).toBeGreaterThanOrEqual(0);
      expect(v).toBeLessThanOrEqual(H);
    }
  });
});
