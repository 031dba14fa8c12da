/**
 * Browser entry point: wires the session client, view state, input mapping
 * and canvas renderers to the DOM.
 */

import { MODES, Mode } from "./protocol.js";
import { SessionClient } from "./session.js";
import { applyHello, applyTelemetry, initialViewState } from "./view.js";
import { drawGauge, drawScanMap, drawScoreChart, drawThumb } from "./render.js";
import {
  SteeringContext,
  arrowToSteering,
  dragToSteering,
  steeringKind,
  zeroSteering,
} from "./input.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function ctx2d(canvas: HTMLCanvasElement): CanvasRenderingContext2D {
  const ctx = canvas.getContext("2d");
  if (ctx === null) {
    throw new Error("canvas 2d context unavailable");
  }
  return ctx;
}

const view = initialViewState();
const session = new SessionClient();

const statusEl = el<HTMLElement>("status");
const urlEl = el<HTMLInputElement>("url");
const connectBtn = el<HTMLButtonElement>("connect");
const pedalBtn = el<HTMLButtonElement>("pedal");
const modeSel = el<HTMLSelectElement>("mode");
const registerBtn = el<HTMLButtonElement>("register");
const resetBtn = el<HTMLButtonElement>("reset");
const readoutEl = el<HTMLPreElement>("readout");
const eventsEl = el<HTMLUListElement>("events");

const gaugeCanvas = el<HTMLCanvasElement>("gauge");
const chartCanvas = el<HTMLCanvasElement>("chart");
const thumbCanvas = el<HTMLCanvasElement>("thumb");
const mapCanvas = el<HTMLCanvasElement>("scanmap");

for (const mode of MODES) {
  const option = document.createElement("option");
  option.value = mode;
  option.textContent = mode.replace(/_/g, " ");
  modeSel.appendChild(option);
}

function steeringContext(): SteeringContext {
  return {
    mode: view.mode,
    forceCapN: view.forceCapN,
    mtmDeltaCapMm: view.mtmDeltaCapMm,
  };
}

session.onStateChange = (state, message) => {
  view.connection = state;
  view.statusMessage = message;
  if (state === "connected" && session.hello !== null) {
    applyHello(view, session.hello);
    modeSel.value = session.hello.mode;
  }
};

session.onTelemetry = (payload) => {
  applyTelemetry(view, payload);
  if (document.activeElement !== modeSel && view.mode !== "") {
    modeSel.value = view.mode;
  }
};

session.onAck = (ack) => {
  if (ack.rejected && ack.reason !== null) {
    view.events.push(`rejected: ${ack.reason}`);
    if (view.events.length > 50) {
      view.events.splice(0, view.events.length - 50);
    }
  }
};

connectBtn.addEventListener("click", () => {
  session.connect(urlEl.value);
});

pedalBtn.addEventListener("click", () => {
  session.setPedal(!session.pedalEngaged);
});

document.addEventListener("keydown", (event) => {
  if (event.code === "Space" && document.activeElement === document.body) {
    event.preventDefault();
    session.setPedal(!session.pedalEngaged);
    return;
  }
  const steering = arrowToSteering(steeringContext(), event.key);
  if (steering !== null) {
    event.preventDefault();
    if (steering.kind === "steer_mtm_delta") {
      session.sendSteeringOnce(steering);
    } else {
      session.setSteering(steering);
    }
  }
});

document.addEventListener("keyup", (event) => {
  if (event.key.startsWith("Arrow") && steeringKind(view.mode) === "force") {
    session.setSteering(zeroSteering(steeringContext()));
  }
});

modeSel.addEventListener("change", () => {
  session.sendCommand({ kind: "set_mode", mode: modeSel.value as Mode });
});

registerBtn.addEventListener("click", () => {
  session.sendCommand({ kind: "start_registration" });
});

resetBtn.addEventListener("click", () => {
  session.sendCommand({ kind: "reset" });
});

// Pointer drags on the scan map.  Cooperative modes hold a force that tracks
// the drag vector (latest-wins); teleoperated modes accumulate pixel deltas
// that a 25 ms flush timer turns into discrete master-arm increments.
let dragging = false;
let dragOriginX = 0;
let dragOriginY = 0;
let mtmAccumX = 0;
let mtmAccumY = 0;

mapCanvas.addEventListener("pointerdown", (event) => {
  dragging = true;
  dragOriginX = event.clientX;
  dragOriginY = event.clientY;
  mtmAccumX = 0;
  mtmAccumY = 0;
  mapCanvas.setPointerCapture(event.pointerId);
});

mapCanvas.addEventListener("pointermove", (event) => {
  if (!dragging) {
    return;
  }
  if (steeringKind(view.mode) === "force") {
    const steering = dragToSteering(
      steeringContext(),
      event.clientX - dragOriginX,
      event.clientY - dragOriginY,
    );
    session.setSteering(steering);
  } else {
    mtmAccumX += event.movementX;
    mtmAccumY += event.movementY;
  }
});

function endDrag(): void {
  if (!dragging) {
    return;
  }
  dragging = false;
  mtmAccumX = 0;
  mtmAccumY = 0;
  session.setSteering(zeroSteering(steeringContext()));
}

mapCanvas.addEventListener("pointerup", endDrag);
mapCanvas.addEventListener("pointercancel", endDrag);

setInterval(() => {
  if (!dragging || steeringKind(view.mode) !== "mtm") {
    return;
  }
  if (mtmAccumX === 0 && mtmAccumY === 0) {
    return;
  }
  const steering = dragToSteering(steeringContext(), mtmAccumX, mtmAccumY);
  mtmAccumX = 0;
  mtmAccumY = 0;
  if (steering !== null) {
    session.sendSteeringOnce(steering);
  }
}, 25);

const gaugeCtx = ctx2d(gaugeCanvas);
const chartCtx = ctx2d(chartCanvas);
const thumbCtx = ctx2d(thumbCanvas);
const mapCtx = ctx2d(mapCanvas);

function renderLoop(): void {
  statusEl.textContent = view.statusMessage;
  statusEl.className = view.connection;
  pedalBtn.classList.toggle("engaged", view.pedal);
  pedalBtn.textContent = view.pedal ? "Pedal engaged (Space)" : "Pedal (Space)";

  drawGauge(gaugeCtx, gaugeCanvas.width, gaugeCanvas.height, view);
  drawScoreChart(chartCtx, chartCanvas.width, chartCanvas.height, view);
  drawThumb(thumbCtx, view);
  drawScanMap(mapCtx, mapCanvas.width, mapCanvas.height, view);

  readoutEl.textContent = [
    `mode       ${view.mode || "-"}`,
    `pedal      ${view.pedal ? "engaged" : "released"}`,
    `probe mm   ${view.probeMm.map((v) => v.toFixed(3)).join(", ")}`,
    `cr         ${view.cr.toFixed(3)} ${view.inFocus ? "(in focus)" : ""}`,
    `axial um/s ${view.axialCmdUmS.toFixed(1)}`,
    `steer ticks consumed ${view.consumedSteerTicks}`,
    `registered ${view.registered}`,
    `frames     ${view.framesApplied} applied / ${view.framesDropped} dropped`,
  ].join("\n");

  const eventsSignature = `${view.events.length}:${view.events[0] ?? ""}`;
  if (eventsEl.dataset.signature !== eventsSignature) {
    eventsEl.dataset.signature = eventsSignature;
    eventsEl.replaceChildren(
      ...view.events.map((text) => {
        const li = document.createElement("li");
        li.textContent = text;
        return li;
      }),
    );
  }

  requestAnimationFrame(renderLoop);
}

requestAnimationFrame(renderLoop);
