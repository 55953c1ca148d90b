// DOM wiring: renders the view model and forwards user input to it.
// Rendering is batched per animation frame.

import { drawSparkline } from "./chart.js";
import { HttpGatewayTransport } from "./transport.js";
import { ConsoleViewModel } from "./viewmodel.js";

const params = new URLSearchParams(location.search);
const gatewayUrl =
  params.get("gateway") ?? `${location.protocol}//${location.host}`;

const localStore = {
  get: (k: string) => localStorage.getItem(k),
  set: (k: string, v: string) => localStorage.setItem(k, v),
};

const vm = new ConsoleViewModel(new HttpGatewayTransport(gatewayUrl), {
  storage: localStore,
});

const el = <T extends HTMLElement>(id: string) =>
  document.getElementById(id) as T;

const banner = el<HTMLDivElement>("banner");
const nodeList = el<HTMLUListElement>("nodes");
const chart = el<HTMLCanvasElement>("chart");
const monoFrame = el<HTMLImageElement>("mono-frame");
const styleSelect = el<HTMLSelectElement>("style");
const instruction = el<HTMLInputElement>("instruction");
const seed = el<HTMLInputElement>("seed");
const submitBtn = el<HTMLButtonElement>("submit");
const submitError = el<HTMLSpanElement>("submit-error");
const jobList = el<HTMLUListElement>("jobs");
const gallery = el<HTMLDivElement>("gallery");

styleSelect.value = vm.draft.style;
instruction.value = vm.draft.instruction;
seed.value = String(vm.draft.seed);

styleSelect.onchange = () => vm.setDraft({ style: styleSelect.value });
instruction.oninput = () => vm.setDraft({ instruction: instruction.value });
seed.onchange = () => vm.setDraft({ seed: Number(seed.value) || 0 });
submitBtn.onclick = () => void vm.submit();

let frameQueued = false;
vm.onChange(() => {
  if (frameQueued) return;
  frameQueued = true;
  requestAnimationFrame(() => {
    frameQueued = false;
    render();
  });
});

function render(): void {
  banner.hidden = vm.connectionState === "connected";
  banner.textContent =
    vm.connectionState === "connecting"
      ? "connecting to gateway…"
      : "gateway disconnected — retrying";

  nodeList.replaceChildren(
    ...vm.nodeList().map((node) => {
      const li = document.createElement("li");
      li.textContent = `node ${node.node_id} · ${node.telemetry_count} samples`;
      li.className = [
        node.node_id === vm.selectedNode ? "selected" : "",
        vm.isLive(node.node_id) ? "live" : "stale",
      ].join(" ");
      li.onclick = () => vm.selectNode(node.node_id);
      return li;
    }),
  );

  const points = vm.selectedSeries();
  drawSparkline(
    chart,
    points.map((p) => p.t),
    [
      { label: "lux", color: "#e1a93c", values: points.map((p) => p.lux) },
      { label: "°C", color: "#e15c5c", values: points.map((p) => p.temp_c) },
      { label: "%RH", color: "#5ca9e1", values: points.map((p) => p.humidity_pct) },
      { label: "hPa", color: "#8a8fd9", values: points.map((p) => p.pressure_hpa) },
      { label: "m/s²", color: "#62c482", values: points.map((p) => p.accel_mag) },
    ],
  );

  const frameUrl = vm.monoFrameUrl();
  if (frameUrl && monoFrame.src !== frameUrl) monoFrame.src = frameUrl;
  monoFrame.hidden = frameUrl === null;

  submitError.textContent = vm.lastError ?? "";

  jobList.replaceChildren(
    ...vm.jobList().map((job) => {
      const li = document.createElement("li");
      li.className = `job ${job.state}`;
      li.textContent = `${job.job_id.slice(0, 8)} · ${job.style} · ${job.state}` +
        (job.error ? ` — ${job.error}` : "");
      return li;
    }),
  );

  gallery.replaceChildren(
    ...vm.gallery
      .slice()
      .reverse()
      .map((entry) => {
        const fig = document.createElement("figure");
        const img = document.createElement("img");
        img.src = entry.imageUrl;
        img.alt = `${entry.style} generation ${entry.jobId}`;
        const cap = document.createElement("figcaption");
        cap.textContent =
          `${entry.style} · seed ${entry.seed}\n+ ${entry.positive}\n− ${entry.negative}`;
        fig.append(img, cap);
        return fig;
      }),
  );
}

vm.connect();
render();
