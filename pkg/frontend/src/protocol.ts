/**
 * Wire types and message builders for the gateway session protocol.
 *
 * Every message the console sends is built here so the shapes stay in one
 * place and the test suite can validate each builder against the shared
 * JSON schema that the server enforces.
 */

export const PROTOCOL_VERSION = 1;

export const MODES = [
  "manual",
  "cooperative",
  "hybrid_cooperative",
  "teleoperated",
  "hybrid_teleoperated",
] as const;

export type Mode = (typeof MODES)[number];

export const COOPERATIVE_MODES: readonly Mode[] = ["cooperative", "hybrid_cooperative"];
export const TELEOPERATED_MODES: readonly Mode[] = ["teleoperated", "hybrid_teleoperated"];

export interface Envelope<T> {
  type: string;
  seq: number;
  payload: T;
}

export interface ClientHelloPayload {
  protocol_version: number;
  client?: string;
}

export type CommandPayload =
  | { kind: "steer_force"; force_n: [number, number] }
  | { kind: "steer_mtm_delta"; delta_mm: [number, number, number] }
  | { kind: "set_mode"; mode: Mode }
  | { kind: "pedal"; engaged: boolean }
  | { kind: "start_registration" }
  | { kind: "reset" };

export type SteeringPayload = Extract<
  CommandPayload,
  { kind: "steer_force" } | { kind: "steer_mtm_delta" }
>;

export interface ServerHelloPayload {
  protocol_version: number;
  server: string;
  mode: Mode;
  modes: Mode[];
  control_rate_hz: number;
  pcle_rate_hz: number;
  telemetry_rate_hz: number;
  t1: number;
  t2: number;
  force_cap_n: number;
  mtm_delta_cap_mm: number;
  disc_radius_mm: number;
}

export interface TelemetryPayload {
  t_s: number;
  mode: Mode;
  pedal: boolean;
  probe_pos_m: [number, number, number];
  cr: number;
  in_focus: boolean;
  axial_cmd_m_s: number;
  frame_index: number;
  thumb_b64: string;
  events: string[];
  consumed_steer_ticks: number;
  registered: boolean;
}

export interface AckPayload {
  ack_of: number | null;
  kind: string | null;
  rejected: boolean;
  reason: string | null;
  clamped: boolean;
  detail?: Record<string, unknown>;
}

export interface ErrorPayload {
  reason: string;
}

export function helloEnvelope(seq: number, client?: string): Envelope<ClientHelloPayload> {
  const payload: ClientHelloPayload = { protocol_version: PROTOCOL_VERSION };
  if (client !== undefined) {
    payload.client = client.slice(0, 120);
  }
  return { type: "hello", seq, payload };
}

export function commandEnvelope(seq: number, payload: CommandPayload): Envelope<CommandPayload> {
  return { type: "command", seq, payload };
}

function isFiniteNumber(v: unknown): v is number {
  return typeof v === "number" && Number.isFinite(v);
}

function isNumberTriple(v: unknown): v is [number, number, number] {
  return Array.isArray(v) && v.length === 3 && v.every(isFiniteNumber);
}

export function isServerHelloPayload(v: unknown): v is ServerHelloPayload {
  if (typeof v !== "object" || v === null) return false;
  const p = v as Record<string, unknown>;
  return (
    isFiniteNumber(p.protocol_version) &&
    typeof p.mode === "string" &&
    isFiniteNumber(p.control_rate_hz) &&
    isFiniteNumber(p.telemetry_rate_hz) &&
    isFiniteNumber(p.t1) &&
    isFiniteNumber(p.t2) &&
    isFiniteNumber(p.force_cap_n) &&
    isFiniteNumber(p.mtm_delta_cap_mm)
  );
}

export function isTelemetryPayload(v: unknown): v is TelemetryPayload {
  if (typeof v !== "object" || v === null) return false;
  const p = v as Record<string, unknown>;
  return (
    isFiniteNumber(p.t_s) &&
    typeof p.mode === "string" &&
    typeof p.pedal === "boolean" &&
    isNumberTriple(p.probe_pos_m) &&
    isFiniteNumber(p.cr) &&
    typeof p.in_focus === "boolean" &&
    isFiniteNumber(p.frame_index) &&
    typeof p.thumb_b64 === "string" &&
    Array.isArray(p.events) &&
    isFiniteNumber(p.consumed_steer_ticks) &&
    typeof p.registered === "boolean"
  );
}

export function isAckPayload(v: unknown): v is AckPayload {
  if (typeof v !== "object" || v === null) return false;
  const p = v as Record<string, unknown>;
  return "ack_of" in p && typeof p.rejected === "boolean" && typeof p.clamped === "boolean";
}

/** Decode a base64 string into bytes in both browser and node contexts. */
export function decodeBase64(b64: string): Uint8ClampedArray {
  if (typeof atob === "function") {
    const raw = atob(b64);
    const out = new Uint8ClampedArray(raw.length);
    for (let i = 0; i < raw.length; i++) {
      out[i] = raw.charCodeAt(i);
    }
    return out;
  }
  const buf = (globalThis as Record<string, any>).Buffer.from(b64, "base64");
  return new Uint8ClampedArray(buf);
}
