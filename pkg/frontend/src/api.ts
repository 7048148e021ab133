/** Typed client for the lighting service HTTP API. */

export interface WireLight {
  id: number;
  color: [number, number, number];
  direction: [number, number, number];
  sigma: number;
}

export interface LightsResponse {
  lights: WireLight[];
  revision: number;
}

export interface UploadResponse {
  width: number;
  height: number;
  revision: number;
}

export interface LightPatch {
  color?: [number, number, number];
  direction?: [number, number, number];
  sigma?: number;
  scale?: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function raiseForStatus(response: Response): Promise<void> {
  if (response.ok) return;
  let detail = response.statusText;
  try {
    const body = (await response.json()) as { detail?: string };
    if (body.detail) detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(response.status, detail);
}

export class LightServiceClient {
  constructor(readonly baseUrl: string) {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async createSession(): Promise<string> {
    const response = await fetch(this.url("/api/sessions"), { method: "POST" });
    await raiseForStatus(response);
    return ((await response.json()) as { id: string }).id;
  }

  async uploadPanorama(sid: string, bytes: ArrayBuffer | Uint8Array): Promise<UploadResponse> {
    const response = await fetch(this.url(`/api/sessions/${sid}/panorama`), {
      method: "POST",
      headers: { "Content-Type": "application/octet-stream" },
      body: bytes as BodyInit,
    });
    await raiseForStatus(response);
    return (await response.json()) as UploadResponse;
  }

  async fit(sid: string, overrides: Record<string, number> = {}): Promise<LightsResponse> {
    const response = await fetch(this.url(`/api/sessions/${sid}/fit`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(overrides),
    });
    await raiseForStatus(response);
    return (await response.json()) as LightsResponse;
  }

  async getLights(sid: string): Promise<LightsResponse> {
    const response = await fetch(this.url(`/api/sessions/${sid}/lights`));
    await raiseForStatus(response);
    return (await response.json()) as LightsResponse;
  }

  async addLight(
    sid: string,
    light: { color: number[]; direction: number[]; sigma: number },
  ): Promise<{ id: number; revision: number }> {
    const response = await fetch(this.url(`/api/sessions/${sid}/lights`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(light),
    });
    await raiseForStatus(response);
    return (await response.json()) as { id: number; revision: number };
  }

  async patchLight(
    sid: string,
    lightId: number,
    patch: LightPatch,
  ): Promise<{ light: WireLight; revision: number }> {
    const response = await fetch(this.url(`/api/sessions/${sid}/lights/${lightId}`), {
      method: "PATCH",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(patch),
    });
    await raiseForStatus(response);
    return (await response.json()) as { light: WireLight; revision: number };
  }

  async deleteLight(sid: string, lightId: number): Promise<void> {
    const response = await fetch(this.url(`/api/sessions/${sid}/lights/${lightId}`), {
      method: "DELETE",
    });
    await raiseForStatus(response);
  }

  previewUrl(sid: string, width: number, exposure: number, gamma: number, revision: number): string {
    return this.url(
      `/api/sessions/${sid}/preview?width=${width}&exposure=${exposure}&gamma=${gamma}&_rev=${revision}`,
    );
  }

  renderUrl(sid: string, scene: string, size: number, revision: number): string {
    return this.url(
      `/api/sessions/${sid}/render?scene=${scene}&width=${size}&height=${size}&_rev=${revision}`,
    );
  }

  async fetchPreview(sid: string, width: number, exposure = 1.0, gamma = 2.2): Promise<Uint8Array> {
    const response = await fetch(
      this.url(`/api/sessions/${sid}/preview?width=${width}&exposure=${exposure}&gamma=${gamma}`),
    );
    await raiseForStatus(response);
    return new Uint8Array(await response.arrayBuffer());
  }
}
