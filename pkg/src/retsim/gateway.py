"""Real-time bridge between the simulation engine and a browser console.

The gateway owns one :class:`~retsim.sim.Engine` and drives it from a single
asyncio task.  Steering clients connect over a websocket at ``/session``,
receive a versioned hello, then exchange JSON envelopes ``{type, seq,
payload}``: commands flow client to server, acknowledgments and telemetry
flow back.  Every client message is validated against the packaged JSON
schema before it reaches the engine.

Safety rules enforced here rather than in the engine:

* Pedal interlock: steering commands are rejected while the pedal is
  released, and releasing the pedal zeroes every human input channel.
* Mode changes, resets, and registration are allowed only while the pedal
  is released; a mode change or reset restarts the session at the new
  mode's start pose (the surface prior from a completed registration is
  kept, since it describes the phantom, not the operator).
* Disconnect drops the session into the pedal-released safe state before
  the next control tick; the axial controller keeps running.
* Over-cap steering payloads are scaled down to the cap and the ack
  carries a ``clamped`` flag.

Telemetry is paced by simulated time with a deadline accumulator, so the
rate contract (default 30 Hz, never faster than the control rate) holds
regardless of wall-clock pacing.  Delivery is latest-wins per session: a
slow reader sees the newest frame, never a growing backlog.
"""

from __future__ import annotations

import asyncio
import base64
import contextlib
import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from importlib import resources

import jsonschema
import numpy as np
import yaml
from fastapi import FastAPI, WebSocket
from starlette.websockets import WebSocketDisconnect

from . import __version__
from .config import serialize_run_config
from .sim import Engine, RegistrationResult, SimConfig, SimMode, run_registration

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
THUMB_PX = 64

_COOP_STEER = (SimMode.COOPERATIVE, SimMode.HYBRID_COOPERATIVE)
_TELEOP_STEER = (SimMode.TELEOPERATED, SimMode.HYBRID_TELEOPERATED)


def _load_schema() -> dict:
    path = resources.files("retsim") / "data" / "session_command.schema.json"
    return json.loads(path.read_text())


_VALIDATOR = jsonschema.Draft7Validator(_load_schema())


@dataclass(frozen=True)
class GatewayCaps:
    """Safety caps applied to steering payloads before they reach the engine."""

    force_n: float = 5.0
    mtm_delta_m: float = 0.05
    mtm_offset_m: float = 0.05

    def __post_init__(self) -> None:
        if min(self.force_n, self.mtm_delta_m, self.mtm_offset_m) <= 0.0:
            raise ValueError("gateway caps must be positive")


def thumbnail_bytes(pixels: np.ndarray) -> bytes:
    """Downscale a [0, 1] grayscale frame to 64x64 8-bit by block averaging."""
    px = np.asarray(pixels, dtype=float)
    if px.ndim != 2 or min(px.shape) < THUMB_PX:
        raise ValueError(f"need a 2-D frame at least {THUMB_PX} px per side, got {px.shape}")
    by, bx = px.shape[0] // THUMB_PX, px.shape[1] // THUMB_PX
    crop = px[: by * THUMB_PX, : bx * THUMB_PX]
    small = crop.reshape(THUMB_PX, by, THUMB_PX, bx).mean(axis=(1, 3))
    return np.clip(np.rint(small * 255.0), 0, 255).astype(np.uint8).tobytes()


class Session:
    """Per-connection outbound state; owned by the engine task once registered.

    Acks and errors travel on a reliable ordered queue; telemetry sits in a
    one-slot queue where a newer frame replaces an unread older one.
    """

    def __init__(self) -> None:
        self.control: asyncio.Queue = asyncio.Queue()
        self.telemetry: asyncio.Queue = asyncio.Queue(maxsize=1)
        self.out_seq = 0
        self.fatal = False

    def next_seq(self) -> int:
        seq = self.out_seq
        self.out_seq += 1
        return seq

    def send_control(self, kind: str, payload: dict) -> None:
        self.control.put_nowait({"type": kind, "seq": self.next_seq(), "payload": payload})

    def offer_telemetry(self, payload: dict) -> None:
        env = {"type": "telemetry", "seq": self.next_seq(), "payload": payload}
        try:
            self.telemetry.put_nowait(env)
        except asyncio.QueueFull:
            with contextlib.suppress(asyncio.QueueEmpty):
                self.telemetry.get_nowait()
            self.telemetry.put_nowait(env)


@dataclass
class _Ack:
    seq: int | None
    kind: str | None
    rejected: bool = False
    reason: str | None = None
    clamped: bool = False
    detail: dict | None = None

    def payload(self) -> dict:
        out = {
            "ack_of": self.seq,
            "kind": self.kind,
            "rejected": self.rejected,
            "reason": self.reason,
            "clamped": self.clamped,
        }
        if self.detail is not None:
            out["detail"] = self.detail
        return out


class SessionHub:
    """Single owner of the engine; applies commands and paces telemetry.

    Everything below runs on the engine task (or in single-threaded tests),
    so plain attribute access is safe: websocket handlers never touch the
    hub directly, they enqueue messages into :attr:`mailbox`.
    """

    MAX_LOG_RECORDS = 24_000

    def __init__(
        self,
        config: SimConfig,
        *,
        telemetry_rate_hz: float = 30.0,
        caps: GatewayCaps | None = None,
    ) -> None:
        if telemetry_rate_hz <= 0.0:
            raise ValueError("telemetry_rate_hz must be positive")
        if telemetry_rate_hz > config.control_rate_hz:
            raise ValueError(
                "telemetry_rate_hz must not exceed the control rate "
                f"({telemetry_rate_hz} > {config.control_rate_hz})"
            )
        if config.mode is SimMode.MANUAL and config.script is None:
            raise ValueError("manual mode requires a scripted operator")
        self.caps = caps if caps is not None else GatewayCaps()
        self.telemetry_rate_hz = float(telemetry_rate_hz)
        self.engine = Engine(config)
        self.prior = None
        self.mailbox: asyncio.Queue = asyncio.Queue()
        self.sessions: list[Session] = []
        self.started_at = time.monotonic()
        self.closing = False
        self.epoch = 0
        self._next_emit_t = 0.0
        self._pending_events: list[str] = []
        self._registration_waiters: list[tuple[Session, int]] = []

    # -- wire payloads -----------------------------------------------------

    def hello_payload(self) -> dict:
        cfg = self.engine.config
        return {
            "protocol_version": PROTOCOL_VERSION,
            "server": f"retsim {__version__}",
            "mode": cfg.mode.value,
            "modes": [m.value for m in SimMode],
            "control_rate_hz": cfg.control_rate_hz,
            "pcle_rate_hz": cfg.pcle_rate_hz,
            "telemetry_rate_hz": self.telemetry_rate_hz,
            "t1": cfg.autofocus.t1,
            "t2": cfg.autofocus.t2,
            "force_cap_n": self.caps.force_n,
            "mtm_delta_cap_mm": self.caps.mtm_delta_m * 1e3,
            "disc_radius_mm": cfg.phantom.disc_radius_m * 1e3,
        }

    def _snapshot(self, t: float, axial_cmd_m_s: float) -> dict:
        eng = self.engine
        tip = eng.probe.translation
        score = eng.last_score
        return {
            "t_s": float(t),
            "mode": eng.config.mode.value,
            "pedal": eng.external.pedal,
            "probe_pos_m": [float(v) for v in tip],
            "cr": float(score),
            "in_focus": bool(score >= eng.config.autofocus.t2),
            "axial_cmd_m_s": float(axial_cmd_m_s),
            "frame_index": eng.frame_index - 1,
            "thumb_b64": base64.b64encode(thumbnail_bytes(eng.last_frame.pixels)).decode("ascii"),
            "events": list(self._pending_events),
            "consumed_steer_ticks": eng.external.consumed_steer_ticks,
            "registered": self.prior is not None,
        }

    # -- engine stepping ----------------------------------------------------

    def advance(self, ticks: int) -> list[dict]:
        """Run up to `ticks` control ticks, draining the mailbox before each.

        Returns the telemetry payloads emitted, in order.  Emission happens
        at most once per tick, whenever simulated time crosses the next
        telemetry deadline, so a 10 s stretch yields `10 * rate` frames.
        """
        emitted: list[dict] = []
        for _ in range(ticks):
            self._drain_mailbox()
            if self.closing or self._registration_waiters:
                break
            rec = self.engine.tick()
            self._pending_events.extend(rec.events)
            if rec.t + 1e-12 >= self._next_emit_t:
                payload = self._snapshot(rec.t, rec.axial_cmd_m_s)
                self._pending_events.clear()
                self._next_emit_t += 1.0 / self.telemetry_rate_hz
                emitted.append(payload)
                for session in self.sessions:
                    session.offer_telemetry(payload)
            self._trim_log()
        return emitted

    def _trim_log(self) -> None:
        records = self.engine.log.records
        if len(records) > self.MAX_LOG_RECORDS:
            del records[: len(records) // 2]
        scores = self.engine.log.frame_scores
        if len(scores) > self.MAX_LOG_RECORDS:
            del scores[: len(scores) // 2]

    def _drain_mailbox(self) -> None:
        while True:
            try:
                item = self.mailbox.get_nowait()
            except asyncio.QueueEmpty:
                return
            self.handle(item)

    # -- mailbox messages ----------------------------------------------------

    def handle(self, item: tuple) -> None:
        op = item[0]
        if op == "register":
            session = item[1]
            self.sessions.append(session)
            session.send_control("hello", self.hello_payload())
        elif op == "release":
            session = item[1]
            if session in self.sessions:
                self.sessions.remove(session)
            self.release_inputs()
        elif op == "reject":
            _, session, seq, reason = item
            session.send_control("ack", _Ack(seq, None, rejected=True, reason=reason).payload())
        elif op == "client_hello":
            _, session, env = item
            version = env["payload"]["protocol_version"]
            if version != PROTOCOL_VERSION:
                session.fatal = True
                session.send_control(
                    "error",
                    {
                        "reason": f"unsupported protocol_version {version}, "
                        f"server speaks {PROTOCOL_VERSION}",
                    },
                )
        elif op == "command":
            _, session, env = item
            ack = self.apply(env["seq"], env["payload"])
            if ack is None:
                self._registration_waiters.append((session, env["seq"]))
            else:
                session.send_control("ack", ack.payload())
        else:
            raise ValueError(f"unknown mailbox op {op!r}")

    def release_inputs(self) -> None:
        """Pedal-released safe state: zero every human input channel."""
        ext = self.engine.external
        ext.pedal = False
        ext.force_xy = (0.0, 0.0)
        ext.mtm_offset_m = np.zeros(3)

    # -- command application ---------------------------------------------------

    def apply(self, seq: int, payload: dict) -> _Ack | None:
        """Apply one already schema-valid command; None defers (registration)."""
        kind = payload["kind"]
        ext = self.engine.external
        mode = self.engine.config.mode
        if kind == "pedal":
            if payload["engaged"]:
                ext.pedal = True
                ext.mtm_offset_m = np.zeros(3)
                ext.force_xy = (0.0, 0.0)
            else:
                self.release_inputs()
            return _Ack(seq, kind)
        if kind == "steer_force":
            if mode not in _COOP_STEER:
                return _Ack(seq, kind, rejected=True,
                            reason=f"steer_force needs a cooperative mode, session is {mode.value}")
            if not ext.pedal:
                return _Ack(seq, kind, rejected=True, reason="pedal released")
            force = np.asarray(payload["force_n"], dtype=float)
            clamped = False
            norm = float(np.linalg.norm(force))
            if norm > self.caps.force_n:
                force = force * (self.caps.force_n / norm)
                clamped = True
            ext.force_xy = (float(force[0]), float(force[1]))
            return _Ack(seq, kind, clamped=clamped)
        if kind == "steer_mtm_delta":
            if mode not in _TELEOP_STEER:
                return _Ack(seq, kind, rejected=True,
                            reason=f"steer_mtm_delta needs a teleoperated mode, session is {mode.value}")
            if not ext.pedal:
                return _Ack(seq, kind, rejected=True, reason="pedal released")
            delta = np.asarray(payload["delta_mm"], dtype=float) * 1e-3
            clamped = False
            norm = float(np.linalg.norm(delta))
            if norm > self.caps.mtm_delta_m:
                delta = delta * (self.caps.mtm_delta_m / norm)
                clamped = True
            offset = ext.mtm_offset_m + delta
            total = float(np.linalg.norm(offset))
            if total > self.caps.mtm_offset_m:
                offset = offset * (self.caps.mtm_offset_m / total)
                clamped = True
            ext.mtm_offset_m = offset
            return _Ack(seq, kind, clamped=clamped)
        if kind == "set_mode":
            if ext.pedal:
                return _Ack(seq, kind, rejected=True,
                            reason="mode changes require the pedal released")
            target = SimMode(payload["mode"])
            if target is SimMode.MANUAL and self.engine.config.script is None:
                return _Ack(seq, kind, rejected=True,
                            reason="manual mode requires a scripted operator")
            self._rebuild(mode=target)
            return _Ack(seq, kind)
        if kind == "reset":
            if ext.pedal:
                return _Ack(seq, kind, rejected=True, reason="reset requires the pedal released")
            self._rebuild(mode=None)
            return _Ack(seq, kind)
        if kind == "start_registration":
            if ext.pedal:
                return _Ack(seq, kind, rejected=True,
                            reason="registration requires the pedal released")
            return None
        raise ValueError(f"unknown command kind {kind!r}")

    def _rebuild(self, mode: SimMode | None) -> None:
        cfg = self.engine.config
        if mode is not None and mode is not cfg.mode:
            cfg = dataclasses.replace(cfg, mode=mode)
        self.engine = Engine(cfg, prior=self.prior)
        self.epoch += 1
        self._next_emit_t = 0.0
        self._pending_events.clear()

    # -- registration (runs on a worker thread, engine paused) -----------------

    def run_pending_registration(self) -> RegistrationResult:
        return run_registration(self.engine.config)

    def finish_registration(self, result: RegistrationResult) -> None:
        self.prior = result.model
        self.engine.prior = result.model
        detail = {
            "sample_count": result.sample_count,
            "frames_used": result.frames_used,
            "duration_s": result.duration_s,
        }
        waiters, self._registration_waiters = self._registration_waiters, []
        for session, seq in waiters:
            if session in self.sessions:
                session.send_control(
                    "ack", _Ack(seq, "start_registration", detail=detail).payload()
                )


# ---------------------------------------------------------------------------
# message validation (runs on reader tasks; stateless)


def validate_message(text: str) -> tuple[dict | None, int | None, str | None]:
    """Parse and schema-check one client message.

    Returns (message, seq, error).  On failure message is None and error
    holds a one-line reason; seq is still reported when recoverable so the
    rejection ack can reference the offending message.
    """
    try:
        msg = json.loads(text)
    except json.JSONDecodeError as exc:
        return None, None, f"not valid JSON: {exc.msg}"
    seq = msg.get("seq") if isinstance(msg, dict) else None
    if not isinstance(seq, int):
        seq = None
    error = jsonschema.exceptions.best_match(_VALIDATOR.iter_errors(msg))
    if error is not None:
        path = ".".join(str(p) for p in error.absolute_path) or "message"
        return None, seq, f"schema violation at {path}: {error.message}"
    return msg, seq, None


# ---------------------------------------------------------------------------
# asyncio shell


async def _engine_loop(hub: SessionHub, realtime: bool) -> None:
    cfg = hub.engine.config
    dt = cfg.dt
    loop = asyncio.get_running_loop()
    origin = loop.time() - hub.engine.tick_index * dt
    epoch = hub.epoch
    while not hub.closing:
        if hub.epoch != epoch:
            # session restarted (set_mode or reset): restart the pacing clock
            epoch = hub.epoch
            origin = loop.time() - hub.engine.tick_index * dt
        if hub._registration_waiters:
            result = await asyncio.to_thread(hub.run_pending_registration)
            hub.finish_registration(result)
            origin = loop.time() - hub.engine.tick_index * dt
            continue
        if realtime:
            due = int((loop.time() - origin) / dt) - hub.engine.tick_index
            if due <= 0:
                deadline = origin + (hub.engine.tick_index + 1) * dt
                timeout = max(deadline - loop.time(), 0.0)
                try:
                    item = await asyncio.wait_for(hub.mailbox.get(), timeout=timeout)
                    hub.handle(item)
                except asyncio.TimeoutError:
                    pass
                continue
            if due > 10 * cfg.control_rate_hz:
                # fell far behind wall time (suspended process): drop the backlog
                origin = loop.time() - hub.engine.tick_index * dt
                due = 1
            hub.advance(min(due, cfg.control_rate_hz))
        else:
            if not hub.sessions:
                # nobody is watching: block instead of spinning the engine
                item = await hub.mailbox.get()
                hub.handle(item)
                continue
            hub.advance(cfg.ticks_per_frame)
            await asyncio.sleep(0)


async def _write_loop(ws, session: Session) -> None:
    ctrl_get: asyncio.Task | None = None
    tele_get: asyncio.Task | None = None
    try:
        while True:
            if ctrl_get is None:
                ctrl_get = asyncio.ensure_future(session.control.get())
            if tele_get is None:
                tele_get = asyncio.ensure_future(session.telemetry.get())
            done, _ = await asyncio.wait(
                {ctrl_get, tele_get}, return_when=asyncio.FIRST_COMPLETED
            )
            if ctrl_get in done:
                env = ctrl_get.result()
                ctrl_get = None
                await ws.send_text(json.dumps(env))
                if env["type"] == "error" and session.fatal:
                    return
            if tele_get in done:
                env = tele_get.result()
                tele_get = None
                await ws.send_text(json.dumps(env))
    finally:
        for task in (ctrl_get, tele_get):
            if task is not None:
                task.cancel()
                with contextlib.suppress(asyncio.CancelledError):
                    await task


async def _read_loop(ws: WebSocket, hub: SessionHub, session: Session) -> None:
    while True:
        try:
            text = await ws.receive_text()
        except WebSocketDisconnect:
            return
        msg, seq, error = validate_message(text)
        if error is not None:
            hub.mailbox.put_nowait(("reject", session, seq, error))
            continue
        if msg["type"] == "hello":
            hub.mailbox.put_nowait(("client_hello", session, msg))
        else:
            hub.mailbox.put_nowait(("command", session, msg))


def create_app(
    config: SimConfig | None = None,
    *,
    telemetry_rate_hz: float = 30.0,
    realtime: bool = True,
    caps: GatewayCaps | None = None,
):
    """Build the gateway application around one engine instance.

    `realtime` paces the engine to the wall clock (the interactive default);
    tests turn it off to run the session as fast as the host allows, which
    leaves every simulated-time contract intact.
    """
    from contextlib import asynccontextmanager

    cfg = config if config is not None else SimConfig(script=None)
    hub = SessionHub(cfg, telemetry_rate_hz=telemetry_rate_hz, caps=caps)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        task = asyncio.create_task(_engine_loop(hub, realtime))
        try:
            yield
        finally:
            hub.closing = True
            task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await task

    app = FastAPI(title="retsim gateway", lifespan=lifespan)
    app.state.hub = hub

    @app.get("/health")
    def health() -> dict:
        return {"version": __version__, "uptime": time.monotonic() - hub.started_at}

    @app.get("/config")
    def config_echo() -> dict:
        return yaml.safe_load(serialize_run_config(hub.engine.config))

    @app.websocket("/session")
    async def session_ws(ws: WebSocket) -> None:
        await ws.accept()
        session = Session()
        hub.mailbox.put_nowait(("register", session))
        reader = asyncio.create_task(_read_loop(ws, hub, session))
        writer = asyncio.create_task(_write_loop(ws, session))
        try:
            done, pending = await asyncio.wait(
                {reader, writer}, return_when=asyncio.FIRST_COMPLETED
            )
            for task in pending:
                task.cancel()
                with contextlib.suppress(asyncio.CancelledError):
                    await task
            for task in done:
                with contextlib.suppress(Exception):
                    task.result()
        finally:
            hub.mailbox.put_nowait(("release", session))
            with contextlib.suppress(Exception):
                await ws.close()

    return app
