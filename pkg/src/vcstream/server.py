"""Rendering server: signaling, per-session media pipeline and tick loop.

One connection gets one session with its own object pool, predictor, encoder
and stats, matching a pipeline that is torn down on disconnect and rebuilt
for the next client. Per tick the session predicts the camera pose, renders,
converts to I420, encodes, packetizes and hands the packets to a paced sender:
the frame rendered at tick k goes out at tick k+1, the way a fixed-rate
capture-encode pipeline completes a frame one interval after sampling it.
That pacing puts a one-frame floor under motion-to-photon latency by
construction. An optional extra send delay (extra_latency_ms) exists for
latency experiments.

The tick loop is fixed-rate with deadline skipping: when the loop falls
behind by a full period it skips ahead and counts the missed ticks instead of
building a frame backlog.
"""

from __future__ import annotations

import argparse
import asyncio
import sys
import time
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import websockets
from websockets.asyncio.server import serve

from . import protocol
from .frames import ValidationError
from .object_pool import NotFound, ObjectKind, ObjectPool, Transform, UpdateOp
from .object_pool import ValidationError as PoolValidationError
from .pixel import CodecId, Encoder, rgba_to_i420
from .predictor import Pose, PredictorConfig, make_predictor
from .protocol import (
    ConnState, Direction, MsgType, ProtocolError, ProtocolViolation, Role,
    SceneDescription, SessionState, SignalMessage, VideoParams,
    advance_state, decode_message, encode_message, observe_seq,
)
from .renderer import CameraIntrinsics, load_mesh_file, render, render_marker, unit_cube
from .transport import FrameMeta, packetize, serialize_packet


def now_us() -> int:
    return time.monotonic_ns() // 1000


@dataclass
class ServerConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 8765
    width: int = 1280
    height: int = 720
    fps: int = 60
    codec: str = "delta"
    gop_n: int = 60
    mtu_payload: int = 1200
    lookahead_us: int = 60_000
    predictor: str = "ar"
    ar_order: int = 2
    ar_window: int = 60
    background: tuple[int, int, int] = (0, 0, 0)
    mesh_path: str | None = None
    transport: str = "ws"
    extra_latency_ms: float = 0.0
    log_level: str = "info"

    def __post_init__(self):
        if self.fps <= 0:
            raise ValidationError("fps must be > 0")
        if self.width % 2 or self.height % 2 or self.width <= 0 or self.height <= 0:
            raise ValidationError("frame dimensions must be positive and even")
        if self.lookahead_us < 0:
            raise ValidationError("lookahead must be >= 0")
        if self.transport not in ("ws", "udp"):
            raise ValidationError("transport must be ws or udp")
        CodecId.from_name(self.codec)

    @property
    def codec_id(self) -> CodecId:
        return CodecId.from_name(self.codec)

    def predictor_config(self) -> PredictorConfig:
        return PredictorConfig(
            order_p=self.ar_order,
            window_w=self.ar_window,
            tick_hz=float(self.fps),
            lookahead_us=self.lookahead_us,
        )


@dataclass
class SessionStats:
    frames_sent: int = 0
    bytes_sent: int = 0
    ticks_missed: int = 0
    ticks_total: int = 0
    ticks_on_time: int = 0
    stale_dropped: int = 0
    last_applied_control_seq: int = 0
    _window: deque = field(default_factory=deque, repr=False)  # (t_us, nbytes)

    def on_frame_sent(self, t_us: int, nbytes: int):
        self.frames_sent += 1
        self.bytes_sent += nbytes
        self._window.append((t_us, nbytes))
        cutoff = t_us - 1_000_000
        while self._window and self._window[0][0] < cutoff:
            self._window.popleft()

    def current_bitrate_bps(self) -> float:
        return 8.0 * sum(n for _, n in self._window)


@dataclass
class TickResult:
    packets: list[bytes]
    messages: list[SignalMessage]
    frame_seq: int
    marker_id: int | None = None


def build_scene(config: ServerConfig):
    """Register the built-in cube scene (or a mesh file) plus the camera."""
    pool = ObjectPool()
    camera_id = pool.register(
        "camera", ObjectKind.CAMERA, Transform((0.0, 0.0, 3.0), (0.0, 0.0, 0.0, 1.0), (1.0, 1.0, 1.0))
    )
    assets = {}
    if config.mesh_path:
        mesh = load_mesh_file(config.mesh_path)
        name = Path(config.mesh_path).stem or "mesh"
        oid = pool.register(name, ObjectKind.MESH, Transform.identity())
    else:
        mesh = unit_cube()
        oid = pool.register("cube", ObjectKind.MESH, Transform.identity())
    assets[oid] = mesh
    return pool, assets, camera_id


class RenderSession:
    """Protocol and media engine for one client connection.

    Pure of I/O and scheduling: the caller feeds signaling messages in and
    calls tick() at frame boundaries, then transmits whatever comes back.
    """

    def __init__(self, config: ServerConfig):
        self.config = config
        self.pool, self.assets, self.camera_id = build_scene(config)
        self.predictor = make_predictor(config.predictor, config.predictor_config())
        self.encoder = Encoder(config.codec_id, config.width, config.height, config.gop_n)
        self.intrinsics = CameraIntrinsics()
        self.state = SessionState(role=Role.SERVER)
        self.stats = SessionStats()
        self.client_name: str | None = None
        self.udp_port: int | None = None
        self.streaming = False
        self.closed = False
        self._pending_markers: deque[int] = deque()
        self._out_seq = 0
        self._frame_seq = 0
        self._force_keyframe = False

    def _next_seq(self) -> int:
        self._out_seq += 1
        return self._out_seq

    def _send_advance(self, msg: SignalMessage) -> SignalMessage:
        self.state = advance_state(self.state, msg.msg_type, Direction.SENT)
        return msg

    def _fail(self, code: str, detail: str) -> list[SignalMessage]:
        err = protocol.make_error(self._next_seq(), code, detail)
        if self.state.state is not ConnState.CLOSED:
            self.state = advance_state(self.state, MsgType.ERROR, Direction.SENT)
        self.closed = True
        self.streaming = False
        return [err]

    def handle_raw(self, raw: bytes | str) -> list[SignalMessage]:
        try:
            msg = decode_message(raw)
        except ProtocolError as e:
            return self._fail(type(e).__name__.lower(), str(e))
        return self.handle_message(msg)

    def handle_message(self, msg: SignalMessage) -> list[SignalMessage]:
        if self.closed:
            return []
        self.state, accepted = observe_seq(self.state, msg.seq)
        if not accepted:
            self.stats.stale_dropped += 1
            return []
        try:
            self.state = advance_state(self.state, msg.msg_type, Direction.RECEIVED)
        except ProtocolViolation as e:
            return self._fail("protocol_violation", str(e))

        mt = msg.msg_type
        if mt is MsgType.HELLO:
            if msg.payload["protocol_version"] != protocol.PROTOCOL_VERSION:
                return self._fail("unsupported_version", f"server speaks version {protocol.PROTOCOL_VERSION}")
            self.client_name = msg.payload["client_name"]
            return []
        if mt is MsgType.SCENE_REQUEST:
            scene = SceneDescription(
                objects=self.pool.snapshot(),
                video=VideoParams(self.config.width, self.config.height, self.config.fps, self.config.codec_id.wire_name),
            )
            reply = protocol.make_scene_description(self._next_seq(), scene)
            return [self._send_advance(reply)]
        if mt is MsgType.STREAM_START:
            self.pool.seal()
            port = msg.payload.get("udp_port")
            if isinstance(port, int) and not isinstance(port, bool) and 0 < port < 65536:
                self.udp_port = port
            self.streaming = True
            return []
        if mt is MsgType.STREAM_STOP or mt is MsgType.BYE:
            self.streaming = False
            self.closed = True
            return []
        if mt is MsgType.POSE_UPDATE:
            p = msg.payload
            pose = Pose(p["timestamp_us"], p["position"], p["rotation"])
            self.predictor.push_sample(pose)
            self.pool.apply_update(
                self.camera_id, UpdateOp.SET_TRANSFORM,
                Transform(pose.position, pose.rotation, (1.0, 1.0, 1.0)), msg.seq,
            )
            self.stats.last_applied_control_seq = msg.seq
            return []
        if mt is MsgType.OBJECT_CONTROL:
            p = msg.payload
            try:
                self.pool.apply_update(p["id"], p["op"], p["value"], msg.seq)
            except (NotFound, PoolValidationError) as e:
                return self._fail("bad_control", str(e))
            self.stats.last_applied_control_seq = msg.seq
            return []
        if mt is MsgType.MARKER_REQUEST:
            self._pending_markers.append(msg.payload["marker_id"])
            self.stats.last_applied_control_seq = msg.seq
            return []
        if mt is MsgType.STATS:
            if msg.payload.get("need_keyframe"):
                self._force_keyframe = True
            return []
        # marker_ack from a client carries nothing for us
        return []

    def tick(self, t_us: int) -> TickResult:
        """Run one frame through predict, render, convert, encode, packetize."""
        predicted = self.predictor.predict(self.config.lookahead_us)
        snapshot = self.pool.snapshot()
        if predicted is None:
            cam = snapshot[self.camera_id].transform
            cam_pos, cam_rot = cam.position, cam.rotation
        else:
            cam_pos, cam_rot = predicted.position, predicted.rotation
        # captured after the snapshot so the header seq covers every visible effect
        applied = self.stats.last_applied_control_seq

        marker_id = self._pending_markers.popleft() if self._pending_markers else None
        if marker_id is not None:
            frame = render_marker(marker_id, self.config.width, self.config.height, self.config.background, self._frame_seq)
        else:
            frame = render(
                snapshot, self.assets, cam_pos, cam_rot, self.intrinsics,
                self.config.width, self.config.height, self.config.background, self._frame_seq,
            )
        i420 = rgba_to_i420(frame)
        force = self._force_keyframe
        self._force_keyframe = False
        ef = self.encoder.encode(i420, force)
        meta = FrameMeta(
            render_timestamp_us=t_us,
            applied_control_seq=applied,
            render_pose=(*cam_pos, *cam_rot),
            marker=marker_id is not None,
        )
        packets = [serialize_packet(p) for p in packetize(ef, meta, self.config.mtu_payload)]
        self._frame_seq += 1
        self.stats.on_frame_sent(t_us, sum(len(p) for p in packets))
        messages = []
        if marker_id is not None:
            messages.append(protocol.make_marker_ack(self._next_seq(), marker_id, t_us))
        return TickResult(packets, messages, ef.frame_seq, marker_id)


class SignalingServer:
    """WebSocket front end; owns the accept loop and per-session tasks."""

    def __init__(self, config: ServerConfig):
        self.config = config
        self._server = None
        self.sessions_started = 0
        self.last_session: RenderSession | None = None
        self._verbose = config.log_level.lower() in ("debug", "info")

    async def start(self):
        self._server = await serve(self._handler, self.config.listen_host, self.config.listen_port)

    @property
    def port(self) -> int:
        return next(iter(self._server.sockets)).getsockname()[1]

    async def close(self):
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    def _log(self, text: str):
        if self._verbose:
            print(f"[vcserver] {text}", flush=True)

    async def _handler(self, conn):
        session = RenderSession(self.config)
        self.sessions_started += 1
        self.last_session = session
        self._log(f"client connected from {conn.remote_address}")
        sendq: asyncio.Queue = asyncio.Queue()
        tick_task = send_task = stats_task = None
        udp_transport = None
        try:
            async for raw in conn:
                if isinstance(raw, bytes):
                    continue  # media is server to client only
                for m in session.handle_raw(raw):
                    await conn.send(encode_message(m).decode("utf-8"))
                if session.streaming and tick_task is None:
                    if self.config.transport == "udp" and session.udp_port:
                        udp_transport = await self._open_udp(conn, session.udp_port)
                    send_task = asyncio.create_task(self._send_loop(session, conn, sendq, udp_transport))
                    tick_task = asyncio.create_task(self._tick_loop(session, sendq))
                    stats_task = asyncio.create_task(self._stats_loop(session))
                if session.closed:
                    break
        except websockets.exceptions.ConnectionClosed:
            pass
        finally:
            session.streaming = False
            session.closed = True
            for task in (tick_task, send_task, stats_task):
                if task is not None:
                    task.cancel()
            if udp_transport is not None:
                udp_transport.close()
            self._log(
                f"session closed: frames={session.stats.frames_sent} "
                f"bytes={session.stats.bytes_sent} ticks_missed={session.stats.ticks_missed}"
            )

    async def _open_udp(self, conn, port: int):
        host = conn.remote_address[0]
        loop = asyncio.get_running_loop()
        transport, _ = await loop.create_datagram_endpoint(
            asyncio.DatagramProtocol, remote_addr=(host, port)
        )
        return transport

    async def _tick_loop(self, session: RenderSession, sendq: asyncio.Queue):
        loop = asyncio.get_running_loop()
        period = 1.0 / self.config.fps
        extra = self.config.extra_latency_ms / 1000.0
        t0 = loop.time()
        k = 0
        while session.streaming and not session.closed:
            target = t0 + k * period
            late = loop.time() - target
            if late >= period:
                skip = int(late // period)
                session.stats.ticks_missed += skip
                k += skip
                target = t0 + k * period
            delay = target - loop.time()
            if delay > 0:
                await asyncio.sleep(delay)
            start = loop.time()
            session.stats.ticks_total += 1
            if abs(start - target) <= 0.25 * period:
                session.stats.ticks_on_time += 1
            result = session.tick(now_us())
            await sendq.put((target + period + extra, result))
            k += 1

    async def _send_loop(self, session: RenderSession, conn, sendq: asyncio.Queue, udp_transport):
        loop = asyncio.get_running_loop()
        try:
            while True:
                send_at, result = await sendq.get()
                delay = send_at - loop.time()
                if delay > 0:
                    await asyncio.sleep(delay)
                for pkt in result.packets:
                    if udp_transport is not None:
                        udp_transport.sendto(pkt)
                    else:
                        await conn.send(pkt)
                for m in result.messages:
                    await conn.send(encode_message(m).decode("utf-8"))
        except websockets.exceptions.ConnectionClosed:
            session.streaming = False
            session.closed = True

    async def _stats_loop(self, session: RenderSession):
        while session.streaming:
            await asyncio.sleep(1.0)
            s = session.stats
            self._log(
                f"frames={s.frames_sent} bitrate={s.current_bitrate_bps() / 1000:.0f} kbps "
                f"ticks_missed={s.ticks_missed}"
            )


async def run_server(config: ServerConfig):
    server = SignalingServer(config)
    try:
        await server.start()
    except OSError as e:
        print(f"vcserver: cannot listen on {config.listen_host}:{config.listen_port}: {e}", file=sys.stderr)
        raise SystemExit(1)
    print(f"[vcserver] listening on ws://{config.listen_host}:{server.port}", flush=True)
    await asyncio.get_running_loop().create_future()


def _parse_listen(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected host:port, got {value!r}")
    return host, int(port)


def _parse_size(value: str) -> tuple[int, int]:
    try:
        w, h = value.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {value!r}") from None


def _parse_background(value: str) -> tuple[int, int, int]:
    v = value.lstrip("#")
    if len(v) != 6:
        raise argparse.ArgumentTypeError("expected RRGGBB hex")
    return tuple(int(v[i : i + 2], 16) for i in (0, 2, 4))


def load_config_file(path) -> dict:
    """Read simple key=value lines; '#' starts a comment."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected key=value")
        key, _, val = line.partition("=")
        values[key.strip().replace("-", "_")] = val.strip()
    return values


def build_config(args: argparse.Namespace) -> ServerConfig:
    cfg = ServerConfig()
    if args.config:
        raw = load_config_file(args.config)
        parsers = {
            "listen": _parse_listen, "size": _parse_size, "fps": int, "codec": str,
            "gop": int, "mtu": int, "lookahead_ms": float, "predictor": str,
            "ar_order": int, "ar_window": int, "background": _parse_background,
            "mesh": str, "transport": str, "log_level": str, "extra_latency_ms": float,
        }
        for key, value in raw.items():
            if key not in parsers:
                raise ValidationError(f"unknown config key {key!r}")
            raw[key] = parsers[key](value)
        cfg = _apply(cfg, raw)
    flags = {k: v for k, v in vars(args).items() if k != "config" and v is not None}
    return _apply(cfg, flags)


def _apply(cfg: ServerConfig, values: dict) -> ServerConfig:
    updates = {}
    for key, value in values.items():
        if key == "listen":
            updates["listen_host"], updates["listen_port"] = value
        elif key == "size":
            updates["width"], updates["height"] = value
        elif key == "gop":
            updates["gop_n"] = value
        elif key == "mtu":
            updates["mtu_payload"] = value
        elif key == "lookahead_ms":
            updates["lookahead_us"] = int(value * 1000)
        elif key == "mesh":
            updates["mesh_path"] = value
        else:
            updates[key] = value
    return replace(cfg, **updates)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="vcserver", description="Remote rendering stream server")
    parser.add_argument("--config", help="key=value config file; flags override it")
    parser.add_argument("--listen", type=_parse_listen, help="host:port to listen on")
    parser.add_argument("--size", type=_parse_size, help="frame size WxH (even)")
    parser.add_argument("--fps", type=int)
    parser.add_argument("--codec", choices=["raw", "delta"])
    parser.add_argument("--gop", type=int, help="keyframe interval in frames")
    parser.add_argument("--mtu", type=int, help="max packet payload bytes")
    parser.add_argument("--lookahead-ms", dest="lookahead_ms", type=float, help="prediction horizon, set to the estimated M2P latency")
    parser.add_argument("--predictor", choices=["ar", "zoh"])
    parser.add_argument("--ar-order", dest="ar_order", type=int)
    parser.add_argument("--ar-window", dest="ar_window", type=int)
    parser.add_argument("--background", type=_parse_background, help="RRGGBB hex")
    parser.add_argument("--mesh", help="mesh file (v/f text format); default scene is the cube")
    parser.add_argument("--transport", choices=["ws", "udp"])
    parser.add_argument("--extra-latency-ms", dest="extra_latency_ms", type=float, help="artificial send delay for latency experiments")
    parser.add_argument("--log-level", dest="log_level", choices=["debug", "info", "quiet"])
    args = parser.parse_args(argv)
    try:
        config = build_config(args)
        if config.mesh_path and not Path(config.mesh_path).exists():
            print(f"vcserver: mesh file not found: {config.mesh_path}", file=sys.stderr)
            return 1
        asyncio.run(run_server(config))
    except ValidationError as e:
        print(f"vcserver: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
