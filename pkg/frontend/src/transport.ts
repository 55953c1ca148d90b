// Gateway access behind one small interface so the view model can be
// driven headlessly by a scripted fake in tests.

import type { StreamMessage } from "./types.js";

export interface StreamHandle {
  close(): void;
}

export interface GatewayTransport {
  getJson<T>(path: string): Promise<T>;
  postJson<T>(path: string, body: unknown): Promise<T>;
  openStream(
    onMessage: (msg: StreamMessage) => void,
    onClose: () => void,
  ): StreamHandle;
  imageUrl(path: string): string;
}

export class HttpError extends Error {
  constructor(public status: number, public detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export interface KeyValueStore {
  get(key: string): string | null;
  set(key: string, value: string): void;
}

export class HttpGatewayTransport implements GatewayTransport {
  constructor(private baseUrl: string) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.baseUrl + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = await resp.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        /* non-json error body */
      }
      throw new HttpError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  getJson<T>(path: string): Promise<T> {
    return this.request<T>(path);
  }

  postJson<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  openStream(
    onMessage: (msg: StreamMessage) => void,
    onClose: () => void,
  ): StreamHandle {
    const wsUrl = this.baseUrl.replace(/^http/, "ws") + "/stream";
    const ws = new WebSocket(wsUrl);
    ws.onmessage = (ev) => {
      try {
        onMessage(JSON.parse(ev.data as string) as StreamMessage);
      } catch {
        /* malformed frame: ignore */
      }
    };
    ws.onclose = () => onClose();
    ws.onerror = () => ws.close();
    return { close: () => ws.close() };
  }

  imageUrl(path: string): string {
    return this.baseUrl + path;
  }
}
