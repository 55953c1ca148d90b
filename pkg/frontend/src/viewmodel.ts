// Headless state model for the operator console. All gateway access goes
// through the injected transport, so tests drive the full lifecycle with
// a scripted fake: node discovery, telemetry series, job tracking,
// gallery, reconnect-with-dedupe, and prompt-draft persistence.

import type { GatewayTransport, KeyValueStore, StreamHandle } from "./transport.js";
import { HttpError } from "./transport.js";
import type {
  JobInfo,
  NodeSummary,
  PromptDraft,
  StreamMessage,
  TelemetryEntry,
  TelemetryPoint,
  Reading,
} from "./types.js";

const DRAFT_KEY = "edgegen.console.draft";
const SERIES_WINDOW_S = 600; // rolling 10 minutes
const LIVENESS_S = 10;

export interface GalleryEntry {
  jobId: string;
  nodeId: number;
  style: string;
  imageUrl: string;
  positive: string;
  negative: string;
  seed: number;
}

export interface ViewModelOptions {
  now?: () => number;
  delay?: (ms: number) => Promise<void>;
  storage?: KeyValueStore;
  seriesWindowS?: number;
  maxBackoffMs?: number;
}

const defaultDelay = (ms: number) =>
  new Promise<void>((resolve) => setTimeout(resolve, ms));

class MemoryStore implements KeyValueStore {
  private data = new Map<string, string>();
  get(key: string): string | null {
    return this.data.get(key) ?? null;
  }
  set(key: string, value: string): void {
    this.data.set(key, value);
  }
}

function pointFrom(t: number, r: Reading): TelemetryPoint {
  return {
    t,
    lux: r.lux,
    temp_c: r.temp_c,
    humidity_pct: r.humidity_pct,
    pressure_hpa: r.pressure_hpa,
    accel_mag: r.accel_mag,
  };
}

export class ConsoleViewModel {
  nodes = new Map<number, NodeSummary>();
  series = new Map<number, TelemetryPoint[]>();
  frameVersion = new Map<number, number>(); // bumps when a new frame lands
  jobs = new Map<string, JobInfo>();
  jobOrder: string[] = [];
  gallery: GalleryEntry[] = [];
  selectedNode: number | null = null;
  connectionState: "idle" | "connecting" | "connected" | "disconnected" = "idle";
  lastError: string | null = null;
  transitions: string[] = []; // ordered log of state changes, for tests

  draft: PromptDraft;

  private readonly now: () => number;
  private readonly delay: (ms: number) => Promise<void>;
  private readonly storage: KeyValueStore;
  private readonly windowS: number;
  private readonly maxBackoffMs: number;
  private seen = new Map<number, Set<string>>(); // node -> timestamp keys
  private listeners: Array<() => void> = [];
  private stream: StreamHandle | null = null;
  private closed = false;
  private sessionRunning = false;

  constructor(
    private transport: GatewayTransport,
    options: ViewModelOptions = {},
  ) {
    this.now = options.now ?? (() => Date.now() / 1000);
    this.delay = options.delay ?? defaultDelay;
    this.storage = options.storage ?? new MemoryStore();
    this.windowS = options.seriesWindowS ?? SERIES_WINDOW_S;
    this.maxBackoffMs = options.maxBackoffMs ?? 15_000;
    this.draft = this.loadDraft();
  }

  // --- subscriptions ---

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const l of this.listeners) l();
  }

  private log(transition: string): void {
    this.transitions.push(transition);
  }

  // --- drafts ---

  private loadDraft(): PromptDraft {
    const raw = this.storage.get(DRAFT_KEY);
    if (raw) {
      try {
        const parsed = JSON.parse(raw) as PromptDraft;
        if (parsed && typeof parsed.style === "string") return parsed;
      } catch {
        /* corrupted draft: fall through to default */
      }
    }
    return { style: "realistic", instruction: "", seed: 0 };
  }

  setDraft(update: Partial<PromptDraft>): void {
    this.draft = { ...this.draft, ...update };
    this.storage.set(DRAFT_KEY, JSON.stringify(this.draft));
    this.notify();
  }

  // --- connection lifecycle ---

  connect(): void {
    if (this.sessionRunning) return;
    this.sessionRunning = true;
    this.closed = false;
    void this.sessionLoop();
  }

  close(): void {
    this.closed = true;
    this.stream?.close();
  }

  get connected(): boolean {
    return this.connectionState === "connected";
  }

  private setConnectionState(state: ConsoleViewModel["connectionState"]): void {
    if (this.connectionState !== state) {
      this.connectionState = state;
      this.log(state);
      this.notify();
    }
  }

  private async sessionLoop(): Promise<void> {
    let attempt = 0;
    while (!this.closed) {
      this.setConnectionState("connecting");
      let closeNotice: Promise<void>;
      try {
        let resolveClose!: () => void;
        closeNotice = new Promise<void>((resolve) => (resolveClose = resolve));
        this.stream = this.transport.openStream(
          (msg) => this.handleMessage(msg),
          () => resolveClose(),
        );
        await this.hydrate();
      } catch (err) {
        this.stream?.close();
        this.stream = null;
        this.setConnectionState("disconnected");
        attempt += 1;
        await this.delay(Math.min(250 * 2 ** attempt, this.maxBackoffMs));
        continue;
      }
      attempt = 0;
      this.setConnectionState("connected");
      await closeNotice;
      this.stream = null;
      if (this.closed) break;
      this.setConnectionState("disconnected");
      attempt += 1;
      await this.delay(Math.min(250 * 2 ** attempt, this.maxBackoffMs));
    }
    this.sessionRunning = false;
  }

  // Re-fetch REST state; stream events arriving meanwhile dedupe against it.
  private async hydrate(): Promise<void> {
    const nodes = await this.transport.getJson<NodeSummary[]>("/nodes");
    for (const node of nodes) this.upsertNode(node);
    const horizon = this.now() - this.windowS;
    for (const node of nodes) {
      const entries = await this.transport.getJson<TelemetryEntry[]>(
        `/nodes/${node.node_id}/telemetry?from=${horizon}&to=${this.now() + 60}`,
      );
      for (const entry of entries) {
        this.addPoint(node.node_id, entry.t, entry.reading);
      }
    }
    // refresh jobs we are tracking but whose terminal event we may have missed
    for (const jobId of this.jobOrder) {
      const job = this.jobs.get(jobId);
      if (job && (job.state === "queued" || job.state === "running")) {
        try {
          this.applyJob(await this.transport.getJson<JobInfo>(`/jobs/${jobId}`));
        } catch {
          /* job unknown to a restarted gateway: leave the chip as-is */
        }
      }
    }
    this.notify();
  }

  // --- stream handling ---

  private handleMessage(msg: StreamMessage): void {
    if (msg.type === "telemetry") {
      const p = msg.payload;
      this.addPoint(p.node_id, p.t, p.reading);
      const node = this.nodes.get(p.node_id);
      if (node) {
        node.last_seen = Math.max(node.last_seen, p.t);
        node.telemetry_count += 1;
      } else {
        this.upsertNode({
          node_id: p.node_id,
          last_seen: p.t,
          telemetry_count: 1,
          has_image: false,
        });
      }
      this.notify();
    } else if (msg.type === "image") {
      const p = msg.payload;
      const node = this.nodes.get(p.node_id);
      if (node) {
        node.has_image = true;
        node.last_seen = Math.max(node.last_seen, p.t);
      } else {
        this.upsertNode({
          node_id: p.node_id,
          last_seen: p.t,
          telemetry_count: 0,
          has_image: true,
        });
      }
      this.frameVersion.set(p.node_id, (this.frameVersion.get(p.node_id) ?? 0) + 1);
      this.log(`frame:${p.node_id}`);
      this.notify();
    } else if (msg.type === "job") {
      this.applyJob(msg.payload);
      this.notify();
    }
  }

  private upsertNode(node: NodeSummary): void {
    const existing = this.nodes.get(node.node_id);
    if (!existing) {
      this.nodes.set(node.node_id, { ...node });
      this.log(`node:${node.node_id}`);
      if (this.selectedNode === null) this.selectedNode = node.node_id;
    } else {
      existing.last_seen = Math.max(existing.last_seen, node.last_seen);
      existing.telemetry_count = Math.max(
        existing.telemetry_count,
        node.telemetry_count,
      );
      existing.has_image = existing.has_image || node.has_image;
    }
  }

  private addPoint(nodeId: number, t: number, reading: Reading): void {
    let keys = this.seen.get(nodeId);
    if (!keys) {
      keys = new Set();
      this.seen.set(nodeId, keys);
    }
    const key = String(t);
    if (keys.has(key)) return; // duplicate from hydrate/stream overlap
    keys.add(key);
    let points = this.series.get(nodeId);
    if (!points) {
      points = [];
      this.series.set(nodeId, points);
    }
    points.push(pointFrom(t, reading));
    if (points.length > 1 && points[points.length - 2].t > t) {
      points.sort((a, b) => a.t - b.t);
    }
    const cutoff = points[points.length - 1].t - this.windowS;
    while (points.length > 0 && points[0].t < cutoff) {
      const dropped = points.shift()!;
      keys.delete(String(dropped.t));
    }
  }

  private applyJob(job: JobInfo): void {
    const existing = this.jobs.get(job.job_id);
    if (!existing) {
      this.jobs.set(job.job_id, job);
      this.jobOrder.push(job.job_id);
      this.log(`job:${job.job_id}:${job.state}`);
    } else if (existing.state !== job.state) {
      this.jobs.set(job.job_id, job);
      this.log(`job:${job.job_id}:${job.state}`);
    } else {
      this.jobs.set(job.job_id, job);
    }
    if (job.state === "done" && job.result &&
        !this.gallery.some((g) => g.jobId === job.job_id)) {
      this.gallery.push({
        jobId: job.job_id,
        nodeId: job.node_id,
        style: job.style,
        imageUrl: this.transport.imageUrl(job.result.image_url),
        positive: job.result.prompts?.positive ?? "",
        negative: job.result.prompts?.negative ?? "",
        seed: job.seed,
      });
      this.log(`gallery:${job.job_id}`);
    }
  }

  // --- queries for the UI ---

  nodeList(): NodeSummary[] {
    return [...this.nodes.values()].sort((a, b) => a.node_id - b.node_id);
  }

  isLive(nodeId: number): boolean {
    const node = this.nodes.get(nodeId);
    return node !== undefined && this.now() - node.last_seen < LIVENESS_S;
  }

  selectNode(nodeId: number): void {
    if (this.nodes.has(nodeId)) {
      this.selectedNode = nodeId;
      this.notify();
    }
  }

  selectedSeries(): TelemetryPoint[] {
    if (this.selectedNode === null) return [];
    return this.series.get(this.selectedNode) ?? [];
  }

  monoFrameUrl(): string | null {
    if (this.selectedNode === null) return null;
    const node = this.nodes.get(this.selectedNode);
    if (!node || !node.has_image) return null;
    const v = this.frameVersion.get(this.selectedNode) ?? 0;
    return this.transport.imageUrl(
      `/nodes/${this.selectedNode}/image/latest?v=${v}`,
    );
  }

  jobList(): JobInfo[] {
    return this.jobOrder
      .map((id) => this.jobs.get(id))
      .filter((j): j is JobInfo => j !== undefined);
  }

  // --- actions ---

  async submit(): Promise<string | null> {
    if (this.selectedNode === null) {
      this.lastError = "no node selected";
      this.notify();
      return null;
    }
    this.lastError = null;
    try {
      const { job_id } = await this.transport.postJson<{ job_id: string }>(
        "/generate",
        {
          node_id: this.selectedNode,
          style: this.draft.style,
          user_instruction: this.draft.instruction,
          seed: this.draft.seed,
        },
      );
      this.applyJob(await this.transport.getJson<JobInfo>(`/jobs/${job_id}`));
      this.notify();
      return job_id;
    } catch (err) {
      this.lastError =
        err instanceof HttpError ? err.detail : String(err);
      this.log(`error:${this.lastError}`);
      this.notify();
      return null;
    }
  }
}
