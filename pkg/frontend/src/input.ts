/**
 * Input mapping: pointer drags and arrow keys become steering payloads.
 *
 * Screen coordinates grow rightward in x and downward in y; the scan plane
 * grows rightward in x and upward in y, so the vertical axis is flipped.
 * Cooperative-family modes steer with a planar hand force, teleoperated
 * modes with a master-arm position delta; manual mode takes no steering.
 */

import { COOPERATIVE_MODES, SteeringPayload, TELEOPERATED_MODES } from "./protocol.js";

/** Drag distance (px) that commands the full force cap. */
export const FORCE_FULL_SCALE_PX = 120;
/** Master-arm millimetres commanded per dragged pixel in teleoperated modes. */
export const MTM_MM_PER_PX = 0.002;
/** Arrow-key nudge in teleoperated modes: 50 micrometres. */
export const ARROW_STEP_MM = 0.05;
/** Arrow-key force in cooperative modes, newtons. */
export const ARROW_FORCE_N = 1.0;

export type SteeringKind = "force" | "mtm" | null;

export interface SteeringContext {
  mode: string;
  forceCapN: number;
  mtmDeltaCapMm: number;
}

export function steeringKind(mode: string): SteeringKind {
  if ((COOPERATIVE_MODES as readonly string[]).includes(mode)) return "force";
  if ((TELEOPERATED_MODES as readonly string[]).includes(mode)) return "mtm";
  return null;
}

/** Zero-magnitude steering of the kind the current mode accepts. */
export function zeroSteering(ctx: SteeringContext): SteeringPayload | null {
  switch (steeringKind(ctx.mode)) {
    case "force":
      return { kind: "steer_force", force_n: [0, 0] };
    case "mtm":
      return { kind: "steer_mtm_delta", delta_mm: [0, 0, 0] };
    default:
      return null;
  }
}

/**
 * Map a drag vector (pixels, from gesture origin) to a held steering value.
 *
 * Dragging right steers toward +x; dragging up steers toward +y.
 */
export function dragToSteering(
  ctx: SteeringContext,
  dxPx: number,
  dyPx: number,
): SteeringPayload | null {
  switch (steeringKind(ctx.mode)) {
    case "force": {
      const gain = ctx.forceCapN / FORCE_FULL_SCALE_PX;
      return { kind: "steer_force", force_n: [dxPx * gain, -dyPx * gain] };
    }
    case "mtm":
      return {
        kind: "steer_mtm_delta",
        delta_mm: [dxPx * MTM_MM_PER_PX, -dyPx * MTM_MM_PER_PX, 0],
      };
    default:
      return null;
  }
}

/**
 * Map an arrow key to a steering payload.
 *
 * Teleoperated modes get a fixed 50 um increment per press; cooperative
 * modes get a gentle fixed force to hold while the key is down.
 */
export function arrowToSteering(ctx: SteeringContext, key: string): SteeringPayload | null {
  let ux: number;
  let uy: number;
  switch (key) {
    case "ArrowRight":
      ux = 1;
      uy = 0;
      break;
    case "ArrowLeft":
      ux = -1;
      uy = 0;
      break;
    case "ArrowUp":
      ux = 0;
      uy = 1;
      break;
    case "ArrowDown":
      ux = 0;
      uy = -1;
      break;
    default:
      return null;
  }
  switch (steeringKind(ctx.mode)) {
    case "force":
      return { kind: "steer_force", force_n: [ux * ARROW_FORCE_N, uy * ARROW_FORCE_N] };
    case "mtm":
      return { kind: "steer_mtm_delta", delta_mm: [ux * ARROW_STEP_MM, uy * ARROW_STEP_MM, 0] };
    default:
      return null;
  }
}
