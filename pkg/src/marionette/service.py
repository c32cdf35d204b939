"""Live rollout server.

One asyncio task owns the simulator and policy and advances them at the
control rate; WebSocket handlers only move JSON between that loop and the
clients through bounded queues.  A slow client therefore drops its own
frames but can never stall the simulation or anyone else's stream.

Wire format (all frames carry a protocol version under "v"):

  client -> server
    {"v": 1, "type": "set_loco", "loco": {"v": [vx, vy], "w": w, "height": h}}
    {"v": 1, "type": "set_upper_preset", "preset": "wave"}
    {"v": 1, "type": "set_upper_preset", "frames": [[...], ...], "dt": 0.02}
    {"v": 1, "type": "set_directive",
     "directive": {"pattern": P, "frames": [[...], ...], "dt": 0.02}}
    {"v": 1, "type": "pause", "paused": true}
    {"v": 1, "type": "reset"}
    {"v": 1, "type": "perturb", "force": [fx, fy, fz], "duration": steps}

  server -> client
    {"v": 1, "type": "state", "seq": n, "t": s, "base": {"pos": [...],
     "quat": [...]}, "theta": [...], "markers": [[...], ...],
     "directive_pattern": tag, "reward_terms": {...}}
    {"v": 1, "type": "event", "kind": "fall" | "reset" | "error", ...}

Sequence numbers are stamped per client when a frame is actually sent, so
each client sees a gapless increasing series no matter what was dropped.
"""

import asyncio
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .model import HumanoidModel
from .motion import Motion, PATTERNS, make_directive, pose_dim
from .curriculum import locomotion_directive, with_root_commands
from .policy import MHCPolicy
from .rollout import EpisodeRunner
from .sim import CONTROL_DT, Perturbation

log = logging.getLogger("marionette.service")

PROTOCOL_VERSION = 1
QUEUE_LIMIT = 32
SESSION_PATH = "/session"
# planar speeds below this count as standing when choosing UPPER_* patterns
MOVING_EPS = 1e-6


class ServiceError(Exception):
    """A client-visible command failure; code goes into the error frame."""

    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(message)


def _require(condition: bool, code: str, message: str) -> None:
    if not condition:
        raise ServiceError(code, message)


def _as_vector(value, length: int, code: str, name: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ServiceError(code, f"{name} must be a list of numbers") from None
    _require(arr.shape == (length,), code,
             f"{name} must have {length} entries, got shape {arr.shape}")
    _require(bool(np.all(np.isfinite(arr))), code, f"{name} must be finite")
    return arr


class LiveSession:
    """Session state plus the command handlers; driven by the sim loop only."""

    def __init__(self, model: HumanoidModel, policy: MHCPolicy,
                 presets: dict | None = None):
        self.model = model
        self.presets = dict(presets or {})
        self.loco_v = np.zeros(2)
        self.loco_w = 0.0
        self.loco_height = float(model.nominal_height)
        self.upper: Motion | None = None
        self.override = None          # explicit full Directive, wins over composition
        self.paused = False
        self.perturb_force = np.zeros(3)
        self.perturb_left = 0
        self.total_steps = 0
        self.events: list[dict] = []
        self.last_terms: dict = {}
        runner = EpisodeRunner(model, policy, self._compose(),
                               encoder_noise=0.0)
        self.runner = runner

    # -- directive composition ----------------------------------------------

    def _compose(self, offset: int = 0):
        if self.override is not None:
            return self.override
        if self.upper is not None:
            moving = (abs(self.loco_v[0]) > MOVING_EPS
                      or abs(self.loco_v[1]) > MOVING_EPS
                      or abs(self.loco_w) > MOVING_EPS)
            pattern = "UPPER_LOCO" if moving else "UPPER_STAND"
            rooted = with_root_commands(self.upper, self.loco_v, self.loco_w,
                                        self.loco_height)
            return make_directive(rooted, pattern, self.model,
                                  start_offset=offset % rooted.horizon)
        return locomotion_directive(self.loco_v, self.loco_w,
                                    self.loco_height, self.model)

    def _apply_directive(self, keep_playhead: bool) -> None:
        # Keeping the playhead lets a loco tweak ride an ongoing arm motion
        # instead of snapping it back to frame zero.
        offset = 0
        if keep_playhead and self.runner.directive.motion.horizon > 2:
            offset = (self.runner.directive.start_offset
                      + self.runner.directive_t)
        self.runner.set_directive(self._compose(offset))

    # -- command handlers ----------------------------------------------------

    def handle(self, msg: dict) -> None:
        _require(isinstance(msg, dict), "BAD_MESSAGE", "frame must be an object")
        version = msg.get("v")
        _require(version == PROTOCOL_VERSION, "BAD_MESSAGE",
                 f"unsupported protocol version {version!r}")
        kind = msg.get("type")
        handler = getattr(self, f"_cmd_{kind}", None) if isinstance(kind, str) else None
        _require(handler is not None, "BAD_MESSAGE",
                 f"unknown message type {kind!r}")
        handler(msg)

    def _cmd_set_loco(self, msg: dict) -> None:
        loco = msg.get("loco")
        _require(isinstance(loco, dict), "BAD_MESSAGE",
                 "set_loco needs a 'loco' object")
        if "v" in loco:
            self.loco_v = _as_vector(loco["v"], 2, "BAD_MESSAGE", "loco.v")
        if "w" in loco:
            _require(isinstance(loco["w"], (int, float)), "BAD_MESSAGE",
                     "loco.w must be a number")
            self.loco_w = float(loco["w"])
        if "height" in loco:
            _require(isinstance(loco["height"], (int, float)), "BAD_MESSAGE",
                     "loco.height must be a number")
            self.loco_height = float(loco["height"])
        self.override = None
        self._apply_directive(keep_playhead=True)

    def _cmd_set_upper_preset(self, msg: dict) -> None:
        if "preset" in msg:
            name = msg["preset"]
            if name is None:
                self.upper = None
            else:
                _require(name in self.presets, "UNKNOWN_PRESET",
                         f"unknown preset {name!r}; have {sorted(self.presets)}")
                self.upper = self.presets[name]
        elif "frames" in msg:
            self.upper = self._inline_motion(msg)
        else:
            raise ServiceError("BAD_MESSAGE",
                               "set_upper_preset needs 'preset' or 'frames'")
        self.override = None
        self._apply_directive(keep_playhead=False)

    def _inline_motion(self, msg: dict) -> Motion:
        frames = msg["frames"]
        _require(isinstance(frames, list) and len(frames) >= 2, "BAD_MESSAGE",
                 "frames must be a list of at least 2 rows")
        j = self.model.num_joints
        width = pose_dim(j)
        rows = []
        for i, row in enumerate(frames):
            rows.append(_as_vector(row, width, "DIMENSION_MISMATCH",
                                   f"frames[{i}] (pose rows are {width} wide)"))
        dt = msg.get("dt", CONTROL_DT)
        _require(isinstance(dt, (int, float)) and dt > 0, "BAD_MESSAGE",
                 "dt must be a positive number")
        return Motion(np.array(rows), j, float(dt), source_tag="inline")

    def _cmd_set_directive(self, msg: dict) -> None:
        doc = msg.get("directive")
        _require(isinstance(doc, dict), "BAD_MESSAGE",
                 "set_directive needs a 'directive' object")
        pattern = doc.get("pattern")
        _require(pattern in PATTERNS, "BAD_MESSAGE",
                 f"pattern must be one of {list(PATTERNS)}, got {pattern!r}")
        motion = self._inline_motion(doc)
        self.override = make_directive(motion, pattern, self.model)
        self.upper = None
        self._apply_directive(keep_playhead=False)

    def _cmd_pause(self, msg: dict) -> None:
        paused = msg.get("paused", True)
        _require(isinstance(paused, bool), "BAD_MESSAGE",
                 "paused must be true or false")
        self.paused = paused

    def _cmd_reset(self, msg: dict) -> None:
        self.loco_v = np.zeros(2)
        self.loco_w = 0.0
        self.loco_height = float(self.model.nominal_height)
        self.upper = None
        self.override = None
        self.perturb_left = 0
        self.runner.set_directive(self._compose())
        self.runner.reset()
        self.events.append(self._event("reset"))

    def _cmd_perturb(self, msg: dict) -> None:
        force = _as_vector(msg.get("force"), 3, "BAD_MESSAGE", "force")
        duration = msg.get("duration", 1)
        _require(isinstance(duration, int) and duration >= 1, "BAD_MESSAGE",
                 "duration must be a positive integer step count")
        # validated the same way as training-time perturbation events
        Perturbation(force, 0, duration)
        self.perturb_force = force
        self.perturb_left = duration
        self.events.append(self._event("perturb", force=force.tolist(),
                                       duration=duration))

    # -- stepping and frames -------------------------------------------------

    def step(self) -> None:
        """Advance one policy step unless paused; queue fall events."""
        if self.paused:
            return
        force = None
        if self.perturb_left > 0:
            force = self.perturb_force
            self.perturb_left -= 1
        result = self.runner.step(external_force=force, deterministic=True)
        self.total_steps += 1
        self.last_terms = {k: float(v) for k, v in result.breakdown.terms.items()}
        if result.fell:
            self.events.append(self._event("fall"))
            self.perturb_left = 0
            self.runner.reset()

    def take_events(self) -> list[dict]:
        out, self.events = self.events, []
        return out

    def _event(self, kind: str, **extra) -> dict:
        return {"v": PROTOCOL_VERSION, "type": "event", "kind": kind,
                "t": round(self.total_steps * CONTROL_DT, 6), **extra}

    def frame(self) -> dict:
        state = self.runner.state
        return {
            "v": PROTOCOL_VERSION,
            "type": "state",
            "t": round(self.total_steps * CONTROL_DT, 6),
            "base": {"pos": state.base_pos.tolist(),
                     "quat": state.base_quat.tolist()},
            "theta": state.theta.tolist(),
            "markers": self.runner.markers().tolist(),
            "directive_pattern": self.runner.directive.pattern,
            "reward_terms": self.last_terms,
        }


def error_frame(exc: ServiceError) -> dict:
    return {"v": PROTOCOL_VERSION, "type": "event", "kind": "error",
            "code": exc.code, "message": str(exc)}


def _offer(queue: asyncio.Queue, item: dict) -> None:
    """Non-blocking put; a full queue drops its oldest entry first."""
    while True:
        try:
            queue.put_nowait(item)
            return
        except asyncio.QueueFull:
            try:
                queue.get_nowait()
            except asyncio.QueueEmpty:
                pass


@dataclass(eq=False)
class _Client:
    socket: object
    queue: asyncio.Queue = field(
        default_factory=lambda: asyncio.Queue(maxsize=QUEUE_LIMIT))


async def _send_loop(client: _Client) -> None:
    seq = 0
    while True:
        frame = await client.queue.get()
        if frame.get("type") == "state":
            frame = {**frame, "seq": seq}
            seq += 1
        await client.socket.send(json.dumps(frame))


async def serve_async(model: HumanoidModel, policy: MHCPolicy, *,
                      host: str = "127.0.0.1", port: int = 8765,
                      rate_hz: float = 20.0, speed: float = 1.0,
                      presets: dict | None = None,
                      started: asyncio.Future | None = None) -> None:
    """Run the session server until cancelled."""
    import websockets

    session = LiveSession(model, policy, presets)
    clients: set[_Client] = set()
    commands: asyncio.Queue = asyncio.Queue()

    async def handler(socket):
        path = socket.request.path
        if path != SESSION_PATH:
            await socket.close(code=1008, reason=f"unknown path {path}")
            return
        client = _Client(socket)
        clients.add(client)
        sender = asyncio.create_task(_send_loop(client))
        log.info("client connected (%d active)", len(clients))
        try:
            async for raw in socket:
                try:
                    msg = json.loads(raw)
                except (json.JSONDecodeError, UnicodeDecodeError):
                    _offer(client.queue, error_frame(
                        ServiceError("BAD_MESSAGE", "frame is not valid JSON")))
                    continue
                commands.put_nowait((client, msg))
        finally:
            clients.discard(client)
            sender.cancel()
            log.info("client disconnected (%d active)", len(clients))

    async def sim_loop():
        step_wall = CONTROL_DT / speed
        broadcast_wall = 1.0 / rate_hz
        next_step = time.monotonic()
        next_broadcast = next_step
        while True:
            while not commands.empty():
                client, msg = commands.get_nowait()
                try:
                    session.handle(msg)
                except ServiceError as exc:
                    _offer(client.queue, error_frame(exc))
            session.step()
            for event in session.take_events():
                for client in clients:
                    _offer(client.queue, event)
            now = time.monotonic()
            if now >= next_broadcast and clients:
                frame = session.frame()
                for client in clients:
                    _offer(client.queue, frame)
                next_broadcast = max(next_broadcast + broadcast_wall, now)
            next_step += step_wall
            delay = next_step - time.monotonic()
            if delay > 0:
                await asyncio.sleep(delay)
            else:
                # fell behind; rebase rather than bursting to catch up
                next_step = time.monotonic()
                await asyncio.sleep(0)

    async with websockets.serve(handler, host, port) as server:
        if started is not None:
            started.set_result(server)
        bound = server.sockets[0].getsockname()[1] if server.sockets else port
        log.info("listening on ws://%s:%s%s", host, bound, SESSION_PATH)
        await sim_loop()


def serve(model: HumanoidModel, policy: MHCPolicy, *, host: str = "127.0.0.1",
          port: int = 8765, rate_hz: float = 20.0, speed: float = 1.0,
          presets: dict | None = None) -> None:
    asyncio.run(serve_async(model, policy, host=host, port=port,
                            rate_hz=rate_hz, speed=speed, presets=presets))
