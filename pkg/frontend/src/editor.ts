/**
 * Editor controller: turns user actions into service calls and keeps the
 * acknowledged state in sync.  The DOM layer forwards pointer/slider events
 * here; tests drive the same methods directly against a live service.
 */

import { LightServiceClient } from "./api.js";
import { pixelToDir } from "./convert.js";
import { Debouncer, EditorStore } from "./state.js";

export interface EditorView {
  /** Reload panorama/preview/render imagery for an acknowledged revision. */
  refresh(revision: number): void;
  /** Redraw light markers from the store. */
  drawMarkers(): void;
  /** Surface a service or network error next to the offending control. */
  showError(message: string): void;
}

const DRAG_PATCH_INTERVAL_MS = 100; // at most 10 direction patches per second

export class EditorController {
  readonly store = new EditorStore();
  private sessionId: string | null = null;
  private dragTarget: number | null = null;
  private readonly dragDebounce = new Debouncer(DRAG_PATCH_INTERVAL_MS);
  private inflight: Promise<void> = Promise.resolve();

  constructor(
    private readonly client: LightServiceClient,
    private readonly view: EditorView,
  ) {}

  get session(): string {
    if (this.sessionId === null) throw new Error("no session yet: upload a panorama first");
    return this.sessionId;
  }

  /** Create a session and upload panorama bytes (.hdr or .pfm). */
  async open(bytes: ArrayBuffer | Uint8Array): Promise<void> {
    const sid = await this.client.createSession();
    const info = await this.client.uploadPanorama(sid, bytes);
    this.sessionId = sid;
    this.store.panoWidth = info.width;
    this.store.panoHeight = info.height;
    this.store.revision = info.revision;
    this.store.lights = [];
    this.view.refresh(info.revision);
    this.view.drawMarkers();
  }

  async runFit(overrides: Record<string, number> = {}): Promise<void> {
    try {
      const response = await this.client.fit(this.session, overrides);
      if (this.store.applyLights(response)) {
        this.view.refresh(this.store.revision);
        this.view.drawMarkers();
      }
    } catch (err) {
      this.view.showError(String(err));
      throw err;
    }
  }

  async refreshLights(): Promise<void> {
    const response = await this.client.getLights(this.session);
    if (this.store.applyLights(response)) {
      this.view.drawMarkers();
    }
  }

  // --- dragging ---------------------------------------------------------
  beginDrag(lightId: number): void {
    this.dragTarget = lightId;
    this.store.select(lightId);
    this.view.drawMarkers();
  }

  /** Pointer moved to panorama pixel (u, v); PATCHes are rate limited. */
  dragTo(u: number, v: number): void {
    if (this.dragTarget === null) return;
    const target = this.dragTarget;
    const dir = pixelToDir(u, v, this.store.panoWidth, this.store.panoHeight);
    this.dragDebounce.schedule(() => {
      this.queuePatch(target, { direction: [dir.x, dir.y, dir.z] });
    });
  }

  /** Release the drag, flushing the last pending position immediately. */
  async endDrag(): Promise<void> {
    this.dragDebounce.flush();
    this.dragTarget = null;
    await this.inflight;
  }

  // --- slider / button edits ---------------------------------------------
  async setColor(lightId: number, color: [number, number, number]): Promise<void> {
    this.queuePatch(lightId, { color });
    await this.inflight;
  }

  async setSigma(lightId: number, sigma: number): Promise<void> {
    this.queuePatch(lightId, { sigma });
    await this.inflight;
  }

  async scaleIntensity(lightId: number, factor: number): Promise<void> {
    this.queuePatch(lightId, { scale: factor });
    await this.inflight;
  }

  async addLight(): Promise<void> {
    try {
      const created = await this.client.addLight(this.session, {
        color: [1.0, 1.0, 1.0],
        direction: [0.0, 0.0, 1.0],
        sigma: 0.45,
      });
      await this.refreshLights(); // markers only ever come from responses
      this.store.select(created.id);
      this.view.refresh(this.store.revision);
      this.view.drawMarkers();
    } catch (err) {
      this.view.showError(String(err));
      throw err;
    }
  }

  async removeLight(lightId: number): Promise<void> {
    try {
      await this.client.deleteLight(this.session, lightId);
      const response = await this.client.getLights(this.session);
      if (this.store.applyLights(response)) {
        this.view.refresh(this.store.revision);
        this.view.drawMarkers();
      }
    } catch (err) {
      this.view.showError(String(err));
      throw err;
    }
  }

  async removeAllLights(): Promise<void> {
    for (const light of [...this.store.lights]) {
      await this.removeLight(light.id);
    }
  }

  /**
   * Serialize mutations client-side so acknowledgements arrive in order;
   * responses older than the acknowledged revision are discarded anyway.
   */
  private queuePatch(lightId: number, patch: Parameters<LightServiceClient["patchLight"]>[2]): void {
    this.inflight = this.inflight.then(async () => {
      try {
        const ack = await this.client.patchLight(this.session, lightId, patch);
        if (this.store.applyPatched(ack.light, ack.revision)) {
          this.view.refresh(this.store.revision);
          this.view.drawMarkers();
        }
      } catch (err) {
        this.view.showError(String(err));
      }
    });
  }
}
