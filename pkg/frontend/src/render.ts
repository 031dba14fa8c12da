/**
 * Canvas drawing for the console panels.
 *
 * Every function takes a 2D context plus the view state and draws one
 * panel: the focus gauge with its two thresholds, the live thumbnail, the
 * scan map with the in-focus-coloured path trace, and the score history.
 */

import { GaugeZone, THUMB_PX, ViewState, gaugeZone } from "./view.js";

const ZONE_COLORS: Record<GaugeZone, string> = {
  blind: "#b44",
  seeking: "#c90",
  in_focus: "#2a7",
};

const PATH_IN_FOCUS = "#2a7";
const PATH_OUT_OF_FOCUS = "#c90";

export function drawGauge(ctx: CanvasRenderingContext2D, w: number, h: number, view: ViewState): void {
  ctx.clearRect(0, 0, w, h);
  const pad = 8;
  const barW = w - 2 * pad;
  const barH = Math.max(10, h - 2 * pad - 14);
  const zone = gaugeZone(view.cr, view.t1, view.t2);

  ctx.fillStyle = "#222";
  ctx.fillRect(pad, pad, barW, barH);
  ctx.fillStyle = ZONE_COLORS[zone];
  ctx.fillRect(pad, pad, barW * Math.max(0, Math.min(1, view.cr)), barH);

  ctx.strokeStyle = "#ddd";
  for (const threshold of [view.t1, view.t2]) {
    const x = pad + barW * threshold;
    ctx.beginPath();
    ctx.moveTo(x, pad - 3);
    ctx.lineTo(x, pad + barH + 3);
    ctx.stroke();
  }

  ctx.fillStyle = "#ddd";
  ctx.font = "12px sans-serif";
  ctx.fillText(`CR ${view.cr.toFixed(3)} (${zone.replace("_", " ")})`, pad, h - 4);
}

export function drawThumb(ctx: CanvasRenderingContext2D, view: ViewState): void {
  if (view.thumb === null) {
    ctx.fillStyle = "#111";
    ctx.fillRect(0, 0, THUMB_PX, THUMB_PX);
    return;
  }
  const image = ctx.createImageData(THUMB_PX, THUMB_PX);
  for (let i = 0; i < view.thumb.length; i++) {
    const v = view.thumb[i] ?? 0;
    image.data[4 * i] = v;
    image.data[4 * i + 1] = v;
    image.data[4 * i + 2] = v;
    image.data[4 * i + 3] = 255;
  }
  ctx.putImageData(image, 0, 0);
}

/** Pixels-per-millimetre scale that fits the scan disc into a panel. */
export function scanMapScale(discRadiusMm: number, w: number, h: number): number {
  return (Math.min(w, h) / 2 - 10) / Math.max(discRadiusMm, 1e-6);
}

export function drawScanMap(ctx: CanvasRenderingContext2D, w: number, h: number, view: ViewState): void {
  ctx.clearRect(0, 0, w, h);
  const cx = w / 2;
  const cy = h / 2;
  const scale = scanMapScale(view.discRadiusMm, w, h);
  const toX = (xMm: number) => cx + xMm * scale;
  const toY = (yMm: number) => cy - yMm * scale;

  ctx.strokeStyle = "#555";
  ctx.beginPath();
  ctx.arc(cx, cy, view.discRadiusMm * scale, 0, 2 * Math.PI);
  ctx.stroke();

  for (let i = 1; i < view.path.length; i++) {
    const a = view.path[i - 1];
    const b = view.path[i];
    if (a === undefined || b === undefined) continue;
    ctx.strokeStyle = b.inFocus ? PATH_IN_FOCUS : PATH_OUT_OF_FOCUS;
    ctx.beginPath();
    ctx.moveTo(toX(a.xMm), toY(a.yMm));
    ctx.lineTo(toX(b.xMm), toY(b.yMm));
    ctx.stroke();
  }

  ctx.fillStyle = view.pedal ? "#fff" : "#888";
  ctx.beginPath();
  ctx.arc(toX(view.probeMm[0]), toY(view.probeMm[1]), 4, 0, 2 * Math.PI);
  ctx.fill();
}

export function drawScoreChart(ctx: CanvasRenderingContext2D, w: number, h: number, view: ViewState): void {
  ctx.clearRect(0, 0, w, h);
  if (view.scores.length === 0) {
    return;
  }
  const window = view.scores.slice(-Math.max(2, Math.floor(w)));
  const first = window[0];
  const last = window[window.length - 1];
  if (first === undefined || last === undefined) return;
  const tSpan = Math.max(last.t - first.t, 1e-9);
  const toX = (t: number) => ((t - first.t) / tSpan) * (w - 2) + 1;
  const toY = (cr: number) => h - 2 - Math.max(0, Math.min(1, cr)) * (h - 4);

  ctx.strokeStyle = "#555";
  const yT2 = toY(view.t2);
  ctx.beginPath();
  ctx.moveTo(0, yT2);
  ctx.lineTo(w, yT2);
  ctx.stroke();

  ctx.strokeStyle = "#6cf";
  ctx.beginPath();
  for (const [i, p] of window.entries()) {
    if (i === 0) {
      ctx.moveTo(toX(p.t), toY(p.cr));
    } else {
      ctx.lineTo(toX(p.t), toY(p.cr));
    }
  }
  ctx.stroke();
}
