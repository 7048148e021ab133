/** DOM wiring for the light editor. */

import { LightServiceClient } from "./api.js";
import { EditorController, EditorView } from "./editor.js";
import { markerPixel } from "./state.js";

const SIGMA_MIN = 0.05;
const SIGMA_MAX = Math.PI;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function sigmaFromSlider(t: number): number {
  // log scale over [0.05, pi]
  return SIGMA_MIN * Math.pow(SIGMA_MAX / SIGMA_MIN, t);
}

function sliderFromSigma(sigma: number): number {
  return Math.log(sigma / SIGMA_MIN) / Math.log(SIGMA_MAX / SIGMA_MIN);
}

export function bootstrap(baseUrl: string): EditorController {
  const client = new LightServiceClient(baseUrl);
  const stage = el<HTMLDivElement>("stage");
  const previewImg = el<HTMLImageElement>("preview");
  const renderImg = el<HTMLImageElement>("scene-render");
  const errorBox = el<HTMLDivElement>("error");
  const lonLatLabel = el<HTMLSpanElement>("lonlat");
  const sigmaSlider = el<HTMLInputElement>("sigma");
  const colorInput = el<HTMLInputElement>("color");
  const intensitySlider = el<HTMLInputElement>("intensity");
  const sceneSelect = el<HTMLSelectElement>("scene");

  const view: EditorView = {
    refresh(revision: number): void {
      const sid = controller.session;
      previewImg.src = client.previewUrl(sid, 512, 1.0, 2.2, revision);
      renderImg.src = client.renderUrl(sid, sceneSelect.value, 128, revision);
    },
    drawMarkers(): void {
      stage.querySelectorAll(".marker").forEach((m) => m.remove());
      const { panoWidth, panoHeight } = controller.store;
      if (!panoWidth) return;
      for (const light of controller.store.lights) {
        const { u, v } = markerPixel(light, panoWidth, panoHeight);
        const marker = document.createElement("div");
        marker.className = light.selected ? "marker selected" : "marker";
        marker.style.left = `${(u / panoWidth) * 100}%`;
        marker.style.top = `${(v / panoHeight) * 100}%`;
        marker.title = `light ${light.id} (sigma ${light.sigma.toFixed(3)})`;
        marker.addEventListener("pointerdown", (event) => {
          event.preventDefault();
          marker.setPointerCapture(event.pointerId);
          controller.beginDrag(light.id);
          syncSliders();
        });
        marker.addEventListener("pointermove", (event) => {
          if (event.buttons === 0) return;
          const rect = stage.getBoundingClientRect();
          const u2 = ((event.clientX - rect.left) / rect.width) * panoWidth;
          const v2 = ((event.clientY - rect.top) / rect.height) * panoHeight;
          controller.dragTo(
            Math.min(panoWidth, Math.max(0, u2)),
            Math.min(panoHeight, Math.max(0, v2)),
          );
        });
        marker.addEventListener("pointerup", () => {
          void controller.endDrag();
        });
        stage.appendChild(marker);
      }
      const selected = controller.store.selected();
      lonLatLabel.textContent = selected
        ? `lon ${selected.lon.toFixed(1)} / lat ${selected.lat.toFixed(1)}`
        : "";
    },
    showError(message: string): void {
      errorBox.textContent = message;
      errorBox.style.display = "block";
      setTimeout(() => {
        errorBox.style.display = "none";
      }, 6000);
    },
  };

  const controller = new EditorController(client, view);

  function syncSliders(): void {
    const light = controller.store.selected();
    if (!light) return;
    sigmaSlider.value = String(sliderFromSigma(light.sigma));
    const [r, g, b] = light.color;
    const scale = Math.max(r, g, b, 1e-6);
    const hex = (c: number) =>
      Math.round(Math.min(1, c / scale) * 255)
        .toString(16)
        .padStart(2, "0");
    colorInput.value = `#${hex(r)}${hex(g)}${hex(b)}`;
  }

  el<HTMLInputElement>("file").addEventListener("change", async (event) => {
    const input = event.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    try {
      await controller.open(await file.arrayBuffer());
    } catch (err) {
      view.showError(String(err));
    }
  });

  el<HTMLButtonElement>("fit").addEventListener("click", () => {
    void controller.runFit().catch(() => undefined);
  });

  el<HTMLButtonElement>("add").addEventListener("click", () => {
    void controller.addLight().catch(() => undefined);
  });

  el<HTMLButtonElement>("remove").addEventListener("click", () => {
    const light = controller.store.selected();
    if (light) void controller.removeLight(light.id).catch(() => undefined);
  });

  sigmaSlider.addEventListener("change", () => {
    const light = controller.store.selected();
    if (light) void controller.setSigma(light.id, sigmaFromSlider(Number(sigmaSlider.value)));
  });

  intensitySlider.addEventListener("change", () => {
    const light = controller.store.selected();
    if (!light) return;
    void controller.scaleIntensity(light.id, Math.pow(2.0, Number(intensitySlider.value)));
    intensitySlider.value = "0";
  });

  colorInput.addEventListener("change", () => {
    const light = controller.store.selected();
    if (!light) return;
    const hex = colorInput.value.replace("#", "");
    const peak = Math.max(...light.color, 1e-6);
    const channel = (at: number) => (parseInt(hex.slice(at, at + 2), 16) / 255) * peak;
    void controller.setColor(light.id, [channel(0), channel(2), channel(4)]);
  });

  sceneSelect.addEventListener("change", () => {
    view.refresh(controller.store.revision);
  });

  return controller;
}

declare global {
  interface Window {
    editor?: EditorController;
  }
}

if (typeof document !== "undefined" && document.getElementById("stage")) {
  const base = new URLSearchParams(window.location.search).get("api") ?? "http://127.0.0.1:8000";
  window.editor = bootstrap(base);
}
