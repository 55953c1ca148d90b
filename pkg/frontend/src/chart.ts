// Minimal canvas sparkline: one polyline per series, autoscaled, no deps.

export interface SeriesSpec {
  label: string;
  color: string;
  values: number[];
}

export function drawSparkline(
  canvas: HTMLCanvasElement,
  times: number[],
  series: SeriesSpec[],
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const w = canvas.width;
  const h = canvas.height;
  ctx.clearRect(0, 0, w, h);
  if (times.length < 2) {
    ctx.fillStyle = "#8899aa";
    ctx.font = "12px sans-serif";
    ctx.fillText("waiting for telemetry…", 8, h / 2);
    return;
  }
  const t0 = times[0];
  const t1 = times[times.length - 1];
  const span = Math.max(t1 - t0, 1e-9);

  let yIndex = 0;
  for (const s of series) {
    let lo = Math.min(...s.values);
    let hi = Math.max(...s.values);
    if (hi - lo < 1e-9) {
      lo -= 0.5;
      hi += 0.5;
    }
    ctx.strokeStyle = s.color;
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    for (let i = 0; i < times.length; i++) {
      const x = ((times[i] - t0) / span) * (w - 8) + 4;
      const y = h - 4 - ((s.values[i] - lo) / (hi - lo)) * (h - 8);
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    }
    ctx.stroke();
    ctx.fillStyle = s.color;
    ctx.font = "11px sans-serif";
    ctx.fillText(
      `${s.label} ${s.values[s.values.length - 1].toFixed(1)}`,
      6,
      12 + 13 * yIndex,
    );
    yIndex += 1;
  }
}
