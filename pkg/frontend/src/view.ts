/**
 * View-state reducer for the console.
 *
 * Telemetry frames flow through `applyTelemetry`, which drops malformed or
 * out-of-order payloads (with a console diagnostic) and otherwise updates
 * the state synchronously, so whatever the render loop draws next is the
 * newest applied frame.  History buffers are capped so a long session does
 * not grow without bound.
 */

import {
  Mode,
  ServerHelloPayload,
  TelemetryPayload,
  decodeBase64,
  isTelemetryPayload,
} from "./protocol.js";

export const THUMB_PX = 64;
export const MAX_PATH_POINTS = 36_000;
export const MAX_SCORE_POINTS = 36_000;
export const MAX_EVENTS = 50;

export type GaugeZone = "blind" | "seeking" | "in_focus";

export interface PathPoint {
  xMm: number;
  yMm: number;
  inFocus: boolean;
}

export interface ScorePoint {
  t: number;
  cr: number;
}

export interface ViewState {
  connection: string;
  statusMessage: string;
  mode: Mode | "";
  availableModes: Mode[];
  pedal: boolean;
  registered: boolean;
  cr: number;
  inFocus: boolean;
  t1: number;
  t2: number;
  forceCapN: number;
  mtmDeltaCapMm: number;
  discRadiusMm: number;
  probeMm: [number, number, number];
  axialCmdUmS: number;
  thumb: Uint8ClampedArray | null;
  path: PathPoint[];
  scores: ScorePoint[];
  events: string[];
  lastFrameT: number;
  lastFrameIndex: number;
  consumedSteerTicks: number;
  framesApplied: number;
  framesDropped: number;
}

export function initialViewState(): ViewState {
  return {
    connection: "idle",
    statusMessage: "not connected",
    mode: "",
    availableModes: [],
    pedal: false,
    registered: false,
    cr: 0,
    inFocus: false,
    t1: 0.1,
    t2: 0.47,
    forceCapN: 5,
    mtmDeltaCapMm: 0.05,
    discRadiusMm: 1.5,
    probeMm: [0, 0, 0],
    axialCmdUmS: 0,
    thumb: null,
    path: [],
    scores: [],
    events: [],
    lastFrameT: -Infinity,
    lastFrameIndex: -1,
    consumedSteerTicks: 0,
    framesApplied: 0,
    framesDropped: 0,
  };
}

export function applyHello(view: ViewState, hello: ServerHelloPayload): void {
  view.mode = hello.mode;
  view.availableModes = hello.modes ?? [];
  view.t1 = hello.t1;
  view.t2 = hello.t2;
  view.forceCapN = hello.force_cap_n;
  view.mtmDeltaCapMm = hello.mtm_delta_cap_mm;
  if (typeof hello.disc_radius_mm === "number") {
    view.discRadiusMm = hello.disc_radius_mm;
  }
}

/**
 * Fold one telemetry payload into the view state.
 *
 * Returns true when the frame was applied.  Malformed payloads and frames
 * older than (or equal to) the newest applied one are dropped.
 */
export function applyTelemetry(view: ViewState, payload: unknown): boolean {
  if (!isTelemetryPayload(payload)) {
    console.warn("dropping malformed telemetry frame", payload);
    view.framesDropped += 1;
    return false;
  }
  const frame: TelemetryPayload = payload;
  if (frame.t_s <= view.lastFrameT) {
    console.warn(
      `dropping out-of-order telemetry frame t=${frame.t_s} (newest applied ${view.lastFrameT})`,
    );
    view.framesDropped += 1;
    return false;
  }

  view.mode = frame.mode;
  view.pedal = frame.pedal;
  view.registered = frame.registered;
  view.cr = frame.cr;
  view.inFocus = frame.in_focus;
  view.probeMm = [
    frame.probe_pos_m[0] * 1e3,
    frame.probe_pos_m[1] * 1e3,
    frame.probe_pos_m[2] * 1e3,
  ];
  view.axialCmdUmS = frame.axial_cmd_m_s * 1e6;
  view.lastFrameT = frame.t_s;
  view.lastFrameIndex = frame.frame_index;
  view.consumedSteerTicks = frame.consumed_steer_ticks;

  const thumb = decodeBase64(frame.thumb_b64);
  if (thumb.length === THUMB_PX * THUMB_PX) {
    view.thumb = thumb;
  }

  view.path.push({
    xMm: view.probeMm[0],
    yMm: view.probeMm[1],
    inFocus: frame.in_focus,
  });
  if (view.path.length > MAX_PATH_POINTS) {
    view.path.splice(0, view.path.length - MAX_PATH_POINTS);
  }

  view.scores.push({ t: frame.t_s, cr: frame.cr });
  if (view.scores.length > MAX_SCORE_POINTS) {
    view.scores.splice(0, view.scores.length - MAX_SCORE_POINTS);
  }

  for (const event of frame.events) {
    view.events.push(`t=${frame.t_s.toFixed(2)}s ${event}`);
  }
  if (view.events.length > MAX_EVENTS) {
    view.events.splice(0, view.events.length - MAX_EVENTS);
  }

  view.framesApplied += 1;
  return true;
}

/** Classify a focus score against the detection and focus thresholds. */
export function gaugeZone(cr: number, t1: number, t2: number): GaugeZone {
  if (cr >= t2) return "in_focus";
  if (cr >= t1) return "seeking";
  return "blind";
}
