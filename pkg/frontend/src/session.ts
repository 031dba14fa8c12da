/**
 * Gateway session client: handshake, command stream and reconnect logic.
 *
 * The WebSocket implementation is injected so the same client runs against
 * the browser WebSocket, the node `ws` package in integration tests, or a
 * scripted fake in unit tests.  Steering input goes through a latest-wins
 * pump that never exceeds the configured send rate, mirrors the pedal
 * interlock locally, and clamps magnitudes to the caps announced by the
 * server hello.
 */

import {
  AckPayload,
  CommandPayload,
  Envelope,
  PROTOCOL_VERSION,
  ServerHelloPayload,
  SteeringPayload,
  TelemetryPayload,
  commandEnvelope,
  helloEnvelope,
  isAckPayload,
  isServerHelloPayload,
  isTelemetryPayload,
} from "./protocol.js";

export interface WsLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((event: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
}

export type WsFactory = (url: string) => WsLike;

export type SessionState =
  | "idle"
  | "connecting"
  | "connected"
  | "retrying"
  | "incompatible"
  | "closed";

export interface SessionOptions {
  wsFactory?: WsFactory;
  /** Milliseconds between reconnect attempts after a dropped connection. */
  retryDelayMs?: number;
  /** Minimum milliseconds between steering sends (default caps at 60 Hz). */
  minSendIntervalMs?: number;
  /** Resend interval for the steady-state steering heartbeat. */
  heartbeatMs?: number;
  /** Client name reported in the hello. */
  client?: string;
  /** Clock override for tests. */
  now?: () => number;
}

function defaultFactory(url: string): WsLike {
  return new WebSocket(url) as unknown as WsLike;
}

function clampPlanar(v: [number, number], cap: number): [number, number] {
  const norm = Math.hypot(v[0], v[1]);
  if (norm <= cap || norm === 0) return v;
  const s = cap / norm;
  return [v[0] * s, v[1] * s];
}

function clampTriple(v: [number, number, number], cap: number): [number, number, number] {
  const norm = Math.hypot(v[0], v[1], v[2]);
  if (norm <= cap || norm === 0) return v;
  const s = cap / norm;
  return [v[0] * s, v[1] * s, v[2] * s];
}

export class SessionClient {
  state: SessionState = "idle";
  statusMessage = "not connected";
  hello: ServerHelloPayload | null = null;
  pedalEngaged = false;

  steeringSent = 0;
  steeringSuppressed = 0;

  onTelemetry: ((payload: TelemetryPayload) => void) | null = null;
  onAck: ((payload: AckPayload) => void) | null = null;
  onStateChange: ((state: SessionState, message: string) => void) | null = null;

  private readonly factory: WsFactory;
  private readonly retryDelayMs: number;
  private readonly minSendIntervalMs: number;
  private readonly heartbeatMs: number;
  private readonly clientName: string;
  private readonly now: () => number;

  private url = "";
  private ws: WsLike | null = null;
  private seq = 0;
  private intentionalClose = false;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;
  private pumpTimer: ReturnType<typeof setTimeout> | null = null;
  private heartbeatTimer: ReturnType<typeof setInterval> | null = null;
  private desiredSteering: SteeringPayload | null = null;
  private lastSteerAt = -Infinity;

  constructor(options: SessionOptions = {}) {
    this.factory = options.wsFactory ?? defaultFactory;
    this.retryDelayMs = options.retryDelayMs ?? 1000;
    this.minSendIntervalMs = options.minSendIntervalMs ?? 1000 / 60;
    this.heartbeatMs = options.heartbeatMs ?? 500;
    this.clientName = options.client ?? "retsim-console";
    this.now = options.now ?? (() => Date.now());
  }

  connect(url: string): void {
    this.url = url;
    this.intentionalClose = false;
    this.open();
  }

  close(): void {
    this.intentionalClose = true;
    this.clearTimers();
    if (this.ws !== null) {
      try {
        this.ws.close();
      } catch {
        // already gone
      }
      this.ws = null;
    }
    this.setState("closed", "session closed");
  }

  /** Hold a steering value; null stops the stream (for example pedal up). */
  setSteering(payload: SteeringPayload | null): void {
    if (payload === null) {
      this.desiredSteering = null;
      if (this.pumpTimer !== null) {
        clearTimeout(this.pumpTimer);
        this.pumpTimer = null;
      }
      return;
    }
    if (!this.pedalEngaged || this.state !== "connected") {
      // Interlock mirror: steering with the pedal up is discarded outright,
      // never queued for replay at the next engage.
      this.steeringSuppressed += 1;
      return;
    }
    this.desiredSteering = payload;
    this.pumpSteering();
  }

  /**
   * Send one steering command immediately (arrow nudges, teleop drag
   * flushes).  Bypasses latest-wins coalescing so discrete increments are
   * never lost, but still mirrors the pedal interlock and the caps; the
   * caller is responsible for not calling faster than the send-rate budget.
   */
  sendSteeringOnce(payload: SteeringPayload): number | null {
    if (!this.pedalEngaged || this.state !== "connected") {
      this.steeringSuppressed += 1;
      return null;
    }
    this.lastSteerAt = this.now();
    const seq = this.sendCommand(payload);
    if (seq !== null) {
      this.steeringSent += 1;
    }
    return seq;
  }

  setPedal(engaged: boolean): number | null {
    this.pedalEngaged = engaged;
    if (!engaged) {
      this.setSteering(null);
    }
    return this.sendCommand({ kind: "pedal", engaged });
  }

  sendCommand(payload: CommandPayload): number | null {
    if (this.ws === null || this.state !== "connected") {
      return null;
    }
    const seq = this.seq++;
    this.ws.send(JSON.stringify(commandEnvelope(seq, this.capped(payload))));
    return seq;
  }

  private capped(payload: CommandPayload): CommandPayload {
    if (payload.kind === "steer_force") {
      const cap = this.hello?.force_cap_n ?? 5.0;
      return { kind: "steer_force", force_n: clampPlanar(payload.force_n, cap) };
    }
    if (payload.kind === "steer_mtm_delta") {
      const cap = this.hello?.mtm_delta_cap_mm ?? 0.5;
      return { kind: "steer_mtm_delta", delta_mm: clampTriple(payload.delta_mm, cap) };
    }
    return payload;
  }

  private pumpSteering(): void {
    if (this.pumpTimer !== null) {
      return;
    }
    const wait = this.lastSteerAt + this.minSendIntervalMs - this.now();
    if (wait <= 0) {
      this.sendSteeringNow();
      return;
    }
    this.pumpTimer = setTimeout(() => {
      this.pumpTimer = null;
      if (this.desiredSteering !== null && this.pedalEngaged && this.state === "connected") {
        this.sendSteeringNow();
      }
    }, wait);
  }

  private sendSteeringNow(): void {
    if (this.desiredSteering === null) {
      return;
    }
    this.lastSteerAt = this.now();
    if (this.sendCommand(this.desiredSteering) !== null) {
      this.steeringSent += 1;
    }
  }

  private open(): void {
    this.clearTimers();
    this.setState("connecting", `connecting to ${this.url}`);
    this.seq = 0;
    let ws: WsLike;
    try {
      ws = this.factory(this.url);
    } catch {
      this.scheduleRetry();
      return;
    }
    this.ws = ws;
    ws.onopen = () => {
      ws.send(JSON.stringify(helloEnvelope(this.seq++, this.clientName)));
    };
    ws.onmessage = (event) => {
      this.handleMessage(String(event.data));
    };
    ws.onerror = () => {
      // the close handler decides what happens next
    };
    ws.onclose = () => {
      if (this.ws === ws) {
        this.ws = null;
      }
      if (this.intentionalClose || this.state === "incompatible" || this.state === "closed") {
        return;
      }
      this.scheduleRetry();
    };
  }

  private handleMessage(text: string): void {
    let env: Envelope<unknown>;
    try {
      env = JSON.parse(text) as Envelope<unknown>;
    } catch {
      console.warn("dropping unparseable server message");
      return;
    }
    switch (env.type) {
      case "hello":
        if (!isServerHelloPayload(env.payload)) {
          console.warn("dropping malformed server hello");
          return;
        }
        if (env.payload.protocol_version !== PROTOCOL_VERSION) {
          this.markIncompatible(
            `server speaks protocol ${env.payload.protocol_version}, console speaks ${PROTOCOL_VERSION}`,
          );
          return;
        }
        this.hello = env.payload;
        this.setState("connected", `connected to ${env.payload.server}`);
        this.startHeartbeat();
        break;
      case "telemetry":
        if (isTelemetryPayload(env.payload)) {
          this.pedalEngaged = env.payload.pedal;
          this.onTelemetry?.(env.payload);
        } else {
          console.warn("dropping malformed telemetry payload");
        }
        break;
      case "ack":
        if (isAckPayload(env.payload)) {
          this.onAck?.(env.payload);
        }
        break;
      case "error": {
        const reason = String((env.payload as Record<string, unknown> | null)?.reason ?? "");
        if (reason.includes("protocol_version")) {
          this.markIncompatible(reason);
        } else {
          this.statusMessage = `server error: ${reason}`;
        }
        break;
      }
      default:
        console.warn(`dropping server message of unknown type ${String(env.type)}`);
    }
  }

  private markIncompatible(reason: string): void {
    this.setState("incompatible", `protocol incompatible: ${reason}`);
    this.clearTimers();
    if (this.ws !== null) {
      try {
        this.ws.close();
      } catch {
        // already gone
      }
      this.ws = null;
    }
  }

  private scheduleRetry(): void {
    if (this.retryTimer !== null) {
      return;
    }
    this.stopHeartbeat();
    this.setState(
      "retrying",
      `gateway unreachable, retrying in ${(this.retryDelayMs / 1000).toFixed(1)} s`,
    );
    this.retryTimer = setTimeout(() => {
      this.retryTimer = null;
      if (!this.intentionalClose) {
        this.open();
      }
    }, this.retryDelayMs);
  }

  private startHeartbeat(): void {
    this.stopHeartbeat();
    this.heartbeatTimer = setInterval(() => {
      if (this.desiredSteering !== null && this.pedalEngaged && this.state === "connected") {
        this.pumpSteering();
      }
    }, this.heartbeatMs);
  }

  private stopHeartbeat(): void {
    if (this.heartbeatTimer !== null) {
      clearInterval(this.heartbeatTimer);
      this.heartbeatTimer = null;
    }
  }

  private clearTimers(): void {
    if (this.retryTimer !== null) {
      clearTimeout(this.retryTimer);
      this.retryTimer = null;
    }
    if (this.pumpTimer !== null) {
      clearTimeout(this.pumpTimer);
      this.pumpTimer = null;
    }
    this.stopHeartbeat();
  }

  private setState(state: SessionState, message: string): void {
    this.state = state;
    this.statusMessage = message;
    this.onStateChange?.(state, message);
  }
}
