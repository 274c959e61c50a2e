// Live activity-level plot: one polyline per contiguous activity-class run
// (class decides the stroke colour) plus warning markers at alert times.
// Geometry is computed by a pure function so tests can assert on it without
// a canvas; paint() is the only DOM-touching part.

import type { AlertView, HistoryRecord } from "./types.js";

export const CLASS_COLORS: Record<string, string> = {
  Walking: "#2e7d32",
  Running: "#ef6c00",
  Resting: "#1565c0",
  NoActivity: "#757575",
};
const NO_CLASS_COLOR = "#9e9e9e";
const PAD = 28;

export interface Segment {
  color: string;
  points: Array<[number, number]>; // pixel coordinates
}

export interface Marker {
  x: number;
  kind: string;
}

export interface PlotGeometry {
  segments: Segment[];
  markers: Marker[];
  tRange: [number, number];
  levelMax: number;
}

export function computeGeometry(
  records: HistoryRecord[],
  alerts: AlertView[],
  width: number,
  height: number,
): PlotGeometry {
  if (records.length === 0) {
    return { segments: [], markers: [], tRange: [0, 1], levelMax: 1 };
  }
  const t0 = records[0].t;
  const t1 = Math.max(records[records.length - 1].t, t0 + 1e-9);
  const levelMax = Math.max(0.1, ...records.map((r) => r.level)) * 1.1;
  const sx = (t: number) => PAD + ((t - t0) / (t1 - t0)) * (width - 2 * PAD);
  const sy = (level: number) => height - PAD - (level / levelMax) * (height - 2 * PAD);

  const segments: Segment[] = [];
  let current: Segment | null = null;
  for (const rec of records) {
    const color = rec.activity_class ? CLASS_COLORS[rec.activity_class] : NO_CLASS_COLOR;
    const point: [number, number] = [sx(rec.t), sy(rec.level)];
    if (current === null || current.color !== color) {
      const start: Array<[number, number]> = current
        ? [current.points[current.points.length - 1]]
        : [];
      current = { color, points: start.concat([point]) };
      segments.push(current);
    } else {
      current.points.push(point);
    }
  }
  const markers: Marker[] = alerts
    .filter((a) => a.t >= t0 && a.t <= t1)
    .map((a) => ({ x: sx(a.t), kind: a.kind }));
  return { segments, markers, tRange: [t0, t1], levelMax };
}

export function paint(canvas: HTMLCanvasElement, geometry: PlotGeometry): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#ccc";
  ctx.strokeRect(PAD, PAD, canvas.width - 2 * PAD, canvas.height - 2 * PAD);
  for (const segment of geometry.segments) {
    ctx.strokeStyle = segment.color;
    ctx.lineWidth = 2;
    ctx.beginPath();
    segment.points.forEach(([x, y], i) => (i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y)));
    ctx.stroke();
  }
  for (const marker of geometry.markers) {
    ctx.strokeStyle = marker.kind === "RiskyEvent" ? "#c62828" : "#f9a825";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    ctx.moveTo(marker.x, PAD);
    ctx.lineTo(marker.x, canvas.height - PAD);
    ctx.stroke();
  }
}
