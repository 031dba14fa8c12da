/** Shared fixtures for the console test suite. */

import { readFileSync } from "node:fs";
import { ServerHelloPayload, TelemetryPayload } from "../src/protocol.js";
import { SchemaNode } from "../src/schema.js";
import { WsFactory, WsLike } from "../src/session.js";

/** The wire schema is shared verbatim with the gateway package. */
export const SHARED_SCHEMA_PATH = new URL(
  "../../src/retsim/data/session_command.schema.json",
  import.meta.url,
);

export function loadSharedSchema(): SchemaNode {
  return JSON.parse(readFileSync(SHARED_SCHEMA_PATH, "utf-8")) as SchemaNode;
}

export class FakeWs implements WsLike {
  sent: string[] = [];
  closed = false;
  onopen: (() => void) | null = null;
  onmessage: ((event: { data: unknown }) => void) | null = null;
  onclose: (() => void) | null = null;
  onerror: (() => void) | null = null;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    if (!this.closed) {
      this.closed = true;
      this.onclose?.();
    }
  }

  /** Drive the handshake as the server side would. */
  open(): void {
    this.onopen?.();
  }

  receive(message: unknown): void {
    this.onmessage?.({ data: JSON.stringify(message) });
  }

  fail(): void {
    this.onerror?.();
    this.close();
  }

  sentJson(): Array<Record<string, any>> {
    return this.sent.map((text) => JSON.parse(text));
  }
}

export function fakeFactory(): { factory: WsFactory; sockets: FakeWs[] } {
  const sockets: FakeWs[] = [];
  const factory: WsFactory = () => {
    const ws = new FakeWs();
    sockets.push(ws);
    return ws;
  };
  return { factory, sockets };
}

export function serverHello(over: Partial<ServerHelloPayload> = {}): ServerHelloPayload {
  return {
    protocol_version: 1,
    server: "retsim 0.1.0",
    mode: "hybrid_cooperative",
    modes: ["manual", "cooperative", "hybrid_cooperative", "teleoperated", "hybrid_teleoperated"],
    control_rate_hz: 200,
    pcle_rate_hz: 50,
    telemetry_rate_hz: 30,
    t1: 0.1,
    t2: 0.47,
    force_cap_n: 5,
    mtm_delta_cap_mm: 50,
    disc_radius_mm: 1.5,
    ...over,
  };
}

const EMPTY_THUMB = Buffer.alloc(64 * 64).toString("base64");

export function telemetryFrame(over: Partial<TelemetryPayload> = {}): TelemetryPayload {
  return {
    t_s: 0.0,
    mode: "hybrid_cooperative",
    pedal: false,
    probe_pos_m: [0, 0, -0.0004],
    cr: 0.2,
    in_focus: false,
    axial_cmd_m_s: 0,
    frame_index: 0,
    thumb_b64: EMPTY_THUMB,
    events: [],
    consumed_steer_ticks: 0,
    registered: false,
    ...over,
  };
}

export function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export async function waitFor(
  cond: () => boolean,
  timeoutMs: number,
  what = "condition",
  stepMs = 5,
): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (cond()) {
      return;
    }
    await sleep(stepMs);
  }
  if (!cond()) {
    throw new Error(`timed out after ${timeoutMs} ms waiting for ${what}`);
  }
}
