/**
 * Acknowledged editor state.
 *
 * The store only ever holds light state copied from server responses: a
 * mutation's result is applied when its revision is newer than the current
 * one, and stale (out-of-order) responses are discarded.  Nothing here
 * invents or extrapolates light parameters.
 */

import { dirToLonLat, dirToPixel, lonLatToDir, Vec3 } from "./convert.js";
import { WireLight, LightsResponse } from "./api.js";

export interface UiLight {
  id: number;
  color: [number, number, number];
  lon: number; // degrees, display form of the direction
  lat: number;
  sigma: number;
  selected: boolean;
}

export function fromWire(light: WireLight, selected = false): UiLight {
  const [x, y, z] = light.direction;
  const { lon, lat } = dirToLonLat({ x, y, z });
  return { id: light.id, color: [...light.color], lon, lat, sigma: light.sigma, selected };
}

export function uiDirection(light: UiLight): Vec3 {
  return lonLatToDir(light.lon, light.lat);
}

export function markerPixel(
  light: UiLight,
  width: number,
  height: number,
): { u: number; v: number } {
  return dirToPixel(uiDirection(light), width, height);
}

export class EditorStore {
  lights: UiLight[] = [];
  revision = 0;
  panoWidth = 0;
  panoHeight = 0;
  selectedId: number | null = null;

  /** Replace the whole light list from a GET/fit response, if newer. */
  applyLights(response: LightsResponse): boolean {
    if (response.revision < this.revision) return false;
    const selected = this.selectedId;
    this.lights = response.lights.map((l) => fromWire(l, l.id === selected));
    this.revision = response.revision;
    if (selected !== null && !this.lights.some((l) => l.id === selected)) {
      this.selectedId = null;
    }
    return true;
  }

  /** Apply a single acknowledged PATCH result, if newer. */
  applyPatched(light: WireLight, revision: number): boolean {
    if (revision <= this.revision) return false;
    this.lights = this.lights.map((l) =>
      l.id === light.id ? fromWire(light, l.selected) : l,
    );
    this.revision = revision;
    return true;
  }

  applyRemoved(lightId: number, revision: number): boolean {
    if (revision <= this.revision) return false;
    this.lights = this.lights.filter((l) => l.id !== lightId);
    this.revision = revision;
    if (this.selectedId === lightId) this.selectedId = null;
    return true;
  }

  select(lightId: number | null): void {
    this.selectedId = lightId;
    this.lights = this.lights.map((l) => ({ ...l, selected: l.id === lightId }));
  }

  selected(): UiLight | undefined {
    return this.lights.find((l) => l.selected);
  }
}

/** Trailing-edge debouncer capping calls at one per `intervalMs`. */
export class Debouncer {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private lastFire = -Infinity;
  private pending: (() => void) | null = null;

  constructor(private readonly intervalMs: number) {}

  schedule(action: () => void): void {
    this.pending = action;
    if (this.timer !== null) return; // a flush is already queued
    const now = Date.now();
    const wait = Math.max(0, this.intervalMs - (now - this.lastFire));
    this.timer = setTimeout(() => this.fire(), wait);
  }

  /** Run the pending action immediately (drag release). */
  flush(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    this.fire();
  }

  private fire(): void {
    this.timer = null;
    const action = this.pending;
    this.pending = null;
    if (action) {
      this.lastFire = Date.now();
      action();
    }
  }
}
