// Shapes of the gateway REST/WS API as consumed by the console.

export interface Reading {
  lux: number;
  temp_c: number;
  humidity_pct: number;
  pressure_hpa: number;
  audio_rms: number;
  accel_mps2: number[];
  accel_mag: number;
  wind_mps: number | null;
}

export interface NodeSummary {
  node_id: number;
  last_seen: number;
  telemetry_count: number;
  has_image: boolean;
}

export interface TelemetryEntry {
  t: number;
  reading: Reading;
}

export interface JobResult {
  image_url: string;
  width: number;
  height: number;
  backend: string;
  seed: number;
  control_mode: string;
  timings: Record<string, number>;
  prompts?: { positive: string; negative: string; provenance?: string };
}

export type JobStateName = "queued" | "running" | "done" | "failed";

export interface JobInfo {
  job_id: string;
  node_id: number;
  style: string;
  user_instruction: string;
  backend: string;
  seed: number;
  state: JobStateName;
  submitted_at: number;
  finished_at: number | null;
  error?: string;
  result?: JobResult;
}

export interface TelemetryEvent {
  node_id: number;
  t: number;
  seq: number;
  idx: number;
  reading: Reading;
}

export interface ImageEvent {
  node_id: number;
  image_id: number;
  t: number;
  width: number;
  height: number;
}

export type StreamMessage =
  | { type: "telemetry"; payload: TelemetryEvent }
  | { type: "image"; payload: ImageEvent }
  | { type: "job"; payload: JobInfo };

export interface PromptDraft {
  style: string;
  instruction: string;
  seed: number;
}

export interface TelemetryPoint {
  t: number;
  lux: number;
  temp_c: number;
  humidity_pct: number;
  pressure_hpa: number;
  accel_mag: number;
}
