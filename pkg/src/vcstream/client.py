"""Headless client: handshake, trace replay, decode, marker detection, metrics.

The client measures two things end to end:

* Motion-to-photon latency: it sends marker requests, the server answers with
  one predefined marker frame per request, and the time from request to
  detection of the decoded marker is one M2P sample. Request and detection
  share the client clock, so no clock synchronization is involved.
* Registration error: every frame header echoes the pose it was rendered for;
  comparing that against the client's own pose when the frame arrives gives
  the position/angle error the pose predictor is supposed to shrink.

StreamReceiver is the transport-agnostic receive pipeline (reassemble, decode,
detect, record); run_session wires it to a live WebSocket or UDP session with
wall-clock pacing. Tests drive the same receiver with a virtual clock.
"""

from __future__ import annotations

import argparse
import asyncio
import itertools
import json
import sys

import numpy as np

import websockets
from websockets.asyncio.client import connect

from . import pixel, protocol, quat, traces
from .frames import Frame
from .predictor import Pose
from .protocol import (
    Direction, MsgType, Role, SceneDescription, SessionState, SignalMessage,
    advance_state, decode_message, encode_message, observe_seq,
)
from .renderer import MARKER_BLOCK, MARKER_BLUE
from .transport import DeliveredFrame, ReassemblyBuffer, parse_packet

M2P_TIMEOUT_US = 1_000_000

_EXACT_MARKER_IDS: np.ndarray | None = None


def exact_marker_ids() -> np.ndarray:
    """Marker ids whose block color survives YUV quantization uniquely.

    The limited-range conversion moves Y, U, V by less than one code per
    R or G step, so some adjacent ids land on the same quantized block color
    and no detector can tell them apart afterwards. This is the sorted set of
    ids with a collision class of size one; the latency harness draws its
    marker ids from here.
    """
    global _EXACT_MARKER_IDS
    if _EXACT_MARKER_IDS is None:
        g, r = np.mgrid[0:256, 0:256]
        y, u, v = pixel.rgb_to_yuv_arrays(r, g, MARKER_BLUE)
        key = ((y << 16) | (u << 8) | v).ravel()  # ravel index == r | g << 8
        _, inverse, counts = np.unique(key, return_inverse=True, return_counts=True)
        _EXACT_MARKER_IDS = np.flatnonzero(counts[inverse] == 1)
    return _EXACT_MARKER_IDS


def pick_marker_ids(n: int) -> list[int]:
    """n distinct, exactly detectable marker ids, spread over the id space."""
    ids = exact_marker_ids()
    if n > len(ids):
        raise ValueError(f"only {len(ids)} exactly detectable marker ids exist")
    step = max(1, len(ids) // max(n, 1))
    return [int(ids[(i * step) % len(ids)]) for i in range(n)]


def detect_marker(frame: Frame) -> int | None:
    """Recover the marker id from a decoded I420 frame, or None.

    The mean Y, U, V of the top-left 32x32 block is inverted to RGB, the
    blue channel must sit within +-4 of the marker constant, and the readout
    accepts an (R, G) only if it is the single candidate near the inverse
    whose exact forward conversion reproduces the observed Y, U, V. Ids whose
    color quantized ambiguously yield None rather than a guess.
    """
    if frame.width < MARKER_BLOCK or frame.height < MARKER_BLOCK:
        return None
    y, u, v = frame.i420_planes()
    half = MARKER_BLOCK // 2
    by = int(round(float(y[:MARKER_BLOCK, :MARKER_BLOCK].mean())))
    bu = int(round(float(u[:half, :half].mean())))
    bv = int(round(float(v[:half, :half].mean())))
    r0, g0, b0 = pixel.yuv_to_rgb(by, bu, bv)
    if abs(b0 - MARKER_BLUE) > 4:
        return None
    matches = []
    for dr in range(-3, 4):
        for dg in range(-3, 4):
            r, g = r0 + dr, g0 + dg
            if 0 <= r <= 255 and 0 <= g <= 255 and pixel.rgb_to_yuv(r, g, MARKER_BLUE) == (by, bu, bv):
                matches.append(r | (g << 8))
    if len(matches) == 1:
        return matches[0]
    return None


class StreamReceiver:
    """Receive-side pipeline: packets in, decoded frames and metrics out."""

    def __init__(self, video: protocol.VideoParams):
        self.video = video
        self.reassembler = ReassemblyBuffer()
        self.decoder = pixel.StreamDecoder(video.width, video.height)
        self.frames_received = 0
        self.keyframes_received = 0
        self.bytes_received = 0
        self.marker_frames = 0
        self.corrupt_packets = 0
        self.registration_records: list[dict] = []
        self._pending_m2p: dict[int, int] = {}
        self.m2p_records: list[dict] = []
        self.m2p_unmatched = 0
        self.first_pose_seq: int | None = None
        self.current_pose: Pose | None = None

    @property
    def pos_errors(self) -> list[float]:
        return [r["pos_err_m"] for r in self.registration_records]

    @property
    def ang_errors(self) -> list[float]:
        return [r["ang_err_deg"] for r in self.registration_records]

    def note_pose_sent(self, pose: Pose, seq: int) -> None:
        if self.first_pose_seq is None:
            self.first_pose_seq = seq
        self.current_pose = pose

    def note_marker_request(self, marker_id: int, t_request_us: int) -> None:
        self._pending_m2p[marker_id] = t_request_us

    def expire_markers(self, t_us: int) -> None:
        dead = [mid for mid, t in self._pending_m2p.items() if t_us - t > M2P_TIMEOUT_US]
        for mid in dead:
            del self._pending_m2p[mid]
            self.m2p_unmatched += 1

    @property
    def pending_m2p(self) -> int:
        return len(self._pending_m2p)

    def on_packet(self, raw: bytes, t_us: int) -> Frame | None:
        """Feed one wire packet; returns a decoded scene frame when one completes."""
        self.bytes_received += len(raw)
        try:
            packet = parse_packet(raw)
        except Exception:
            self.corrupt_packets += 1
            return None
        delivered = self.reassembler.add(packet)
        if delivered is None:
            return None
        return self.on_frame(delivered, t_us)

    def on_frame(self, delivered: DeliveredFrame, t_us: int) -> Frame | None:
        frame = self.decoder.decode(delivered.encoded)
        if frame is None:
            return None
        self.frames_received += 1
        self.keyframes_received += delivered.encoded.is_keyframe
        if delivered.marker:
            self.marker_frames += 1
            mid = detect_marker(frame)
            if mid is not None and mid in self._pending_m2p:
                t_request = self._pending_m2p.pop(mid)
                self.m2p_records.append({
                    "marker_id": mid,
                    "t_request_us": t_request,
                    "t_detect_us": t_us,
                    "m2p_us": t_us - t_request,
                })
            return None  # marker frames replace the scene and are not displayed
        self._record_registration(delivered)
        return frame

    def _record_registration(self, delivered: DeliveredFrame) -> None:
        # only meaningful once the server has seen at least one of our poses
        if self.current_pose is None or self.first_pose_seq is None:
            return
        if delivered.applied_control_seq < self.first_pose_seq:
            return
        render_pos = np.asarray(delivered.render_pose[:3], dtype=np.float64)
        render_rot = np.asarray(delivered.render_pose[3:], dtype=np.float64)
        norm = float(np.linalg.norm(render_rot))
        if norm == 0:
            return
        self.registration_records.append({
            "frame_seq": delivered.encoded.frame_seq,
            "pos_err_m": float(np.linalg.norm(render_pos - self.current_pose.position)),
            "ang_err_deg": quat.angle_between_deg(render_rot / norm, self.current_pose.rotation),
        })

    def report(self, duration_s: float) -> dict:
        def series_stats(values):
            if not values:
                return {"count": 0, "mean": None, "p95": None}
            arr = np.asarray(values, dtype=np.float64)
            return {"count": len(values), "mean": float(arr.mean()), "p95": float(np.percentile(arr, 95))}

        m2p_ms = [r["m2p_us"] / 1000.0 for r in self.m2p_records]
        return {
            "duration_s": duration_s,
            "frames_received": self.frames_received,
            "keyframes_received": self.keyframes_received,
            "marker_frames": self.marker_frames,
            "bytes_received": self.bytes_received,
            "bitrate_bps": 8.0 * self.bytes_received / duration_s if duration_s > 0 else 0.0,
            "corrupt_packets": self.corrupt_packets,
            "reassembly": {
                "stale_dropped": self.reassembler.stale_dropped,
                "evicted": self.reassembler.evicted,
                "duplicates": self.reassembler.duplicates,
            },
            "resync_skips": self.decoder.resync_skips,
            "m2p_ms": series_stats(m2p_ms),
            "m2p_records": self.m2p_records,
            "m2p_unmatched": self.m2p_unmatched,
            "pos_err_m": series_stats(self.pos_errors),
            "ang_err_deg": series_stats(self.ang_errors),
        }


class _UdpReceiver(asyncio.DatagramProtocol):
    def __init__(self, queue: asyncio.Queue):
        self.queue = queue

    def datagram_received(self, data, addr):
        self.queue.put_nowait(data)


class SessionError(Exception):
    pass


async def run_session(
    server_url: str,
    trace: list[Pose] | None,
    duration_s: float,
    *,
    m2p_trials: int = 0,
    m2p_interval_ms: float = 150.0,
    m2p_warmup_s: float = 0.3,
    report_path: str | None = None,
    client_name: str = "headless",
    transport: str = "ws",
    clock_us=None,
) -> dict:
    """Run one full client session against a live server; returns the report."""
    if clock_us is None:
        from .server import now_us as clock_us

    seq_counter = itertools.count(1)
    state_box = {"state": SessionState(role=Role.CLIENT)}
    loop = asyncio.get_running_loop()

    async with connect(server_url, max_size=None) as ws:

        async def send_msg(msg: SignalMessage):
            state_box["state"] = advance_state(state_box["state"], msg.msg_type, Direction.SENT)
            await ws.send(encode_message(msg).decode("utf-8"))

        async def recv_msg(timeout: float = 5.0) -> SignalMessage:
            while True:
                raw = await asyncio.wait_for(ws.recv(), timeout)
                if isinstance(raw, bytes):
                    continue
                msg = decode_message(raw)
                new_state, accepted = observe_seq(state_box["state"], msg.seq)
                if not accepted:
                    continue
                state_box["state"] = advance_state(new_state, msg.msg_type, Direction.RECEIVED)
                return msg

        await send_msg(protocol.make_hello(next(seq_counter), client_name))
        await send_msg(protocol.make_scene_request(next(seq_counter)))
        msg = await recv_msg()
        if msg.msg_type is not MsgType.SCENE_DESCRIPTION:
            raise SessionError(f"expected scene_description, got {msg.msg_type.value}")
        scene = SceneDescription.from_payload(msg.payload)
        receiver = StreamReceiver(scene.video)

        udp_transport = None
        udp_queue: asyncio.Queue = asyncio.Queue()
        extra: dict = {}
        if transport == "udp":
            udp_transport, _ = await loop.create_datagram_endpoint(
                lambda: _UdpReceiver(udp_queue), local_addr=("0.0.0.0", 0)
            )
            extra["udp_port"] = udp_transport.get_extra_info("sockname")[1]
        await send_msg(protocol.make_stream_start(next(seq_counter), **extra))

        stop = loop.time() + duration_s

        async def replay_trace():
            if not trace:
                return
            t_start = loop.time()
            t0 = trace[0].timestamp_us
            for pose in trace:
                target = t_start + (pose.timestamp_us - t0) / 1e6
                if target > stop:
                    return
                delay = target - loop.time()
                if delay > 0:
                    await asyncio.sleep(delay)
                seq = next(seq_counter)
                sent = Pose(clock_us(), pose.position, pose.rotation)
                await send_msg(protocol.make_pose_update(seq, sent.timestamp_us, sent.position, sent.rotation))
                receiver.note_pose_sent(sent, seq)

        async def request_markers():
            if m2p_trials <= 0:
                return
            await asyncio.sleep(m2p_warmup_s)
            for mid in pick_marker_ids(m2p_trials):
                receiver.note_marker_request(mid, clock_us())
                await send_msg(protocol.make_marker_request(next(seq_counter), mid))
                await asyncio.sleep(m2p_interval_ms / 1000.0)

        async def receive_media():
            while True:
                remaining = stop - loop.time()
                if remaining <= 0:
                    return
                try:
                    if udp_transport is not None:
                        raw = await asyncio.wait_for(udp_queue.get(), remaining)
                    else:
                        raw = await asyncio.wait_for(ws.recv(), remaining)
                except (asyncio.TimeoutError, TimeoutError):
                    return
                except websockets.exceptions.ConnectionClosed:
                    return
                now = clock_us()
                if isinstance(raw, bytes):
                    receiver.on_packet(raw, now)
                    receiver.expire_markers(now)
                else:
                    msg = decode_message(raw)
                    new_state, accepted = observe_seq(state_box["state"], msg.seq)
                    if not accepted:
                        continue
                    state_box["state"] = advance_state(new_state, msg.msg_type, Direction.RECEIVED)
                    if msg.msg_type is MsgType.ERROR:
                        raise SessionError(f"server error: {msg.payload}")

        tasks = [
            asyncio.create_task(replay_trace()),
            asyncio.create_task(request_markers()),
        ]
        try:
            await receive_media()
        finally:
            for t in tasks:
                t.cancel()
            await asyncio.gather(*tasks, return_exceptions=True)

        receiver.expire_markers(clock_us() + M2P_TIMEOUT_US + 1)
        try:
            streaming = state_box["state"].state is protocol.ConnState.STREAMING
            if streaming and (receiver.m2p_records or receiver.registration_records):
                mean = lambda xs: float(np.mean(xs)) if xs else 0.0
                await send_msg(protocol.make_stats(
                    next(seq_counter),
                    mean([r["m2p_us"] / 1000.0 for r in receiver.m2p_records]),
                    mean(receiver.pos_errors),
                    mean(receiver.ang_errors),
                ))
            await send_msg(protocol.make_bye(next(seq_counter)))
        except websockets.exceptions.ConnectionClosed:
            pass
        if udp_transport is not None:
            udp_transport.close()

    report = receiver.report(duration_s)
    report["client_name"] = client_name
    if report_path:
        with open(report_path, "w") as f:
            json.dump(report, f, indent=2)
    return report


def _build_trace(spec: str, duration_s: float, rate_hz: float) -> list[Pose] | None:
    if spec in traces.TRACE_KINDS:
        return traces.generate_trace(spec, duration_s, rate_hz)
    return traces.load_trace_csv(spec)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="vcclient", description="Headless streaming client and measurement harness")
    parser.add_argument("--server", required=True, help="host:port of the server")
    parser.add_argument("--trace", default="static", help="trace CSV path or one of: static, linear, sinusoid, orbit")
    parser.add_argument("--duration", type=float, default=5.0, help="session length in seconds")
    parser.add_argument("--rate", type=float, default=60.0, help="pose rate for generated traces")
    parser.add_argument("--m2p-trials", dest="m2p_trials", type=int, default=0)
    parser.add_argument("--m2p-interval-ms", dest="m2p_interval_ms", type=float, default=150.0)
    parser.add_argument("--transport", choices=["ws", "udp"], default="ws")
    parser.add_argument("--report", help="write the JSON report here")
    args = parser.parse_args(argv)

    trace = _build_trace(args.trace, args.duration, args.rate)
    url = f"ws://{args.server}"
    try:
        report = asyncio.run(run_session(
            url, trace, args.duration,
            m2p_trials=args.m2p_trials,
            m2p_interval_ms=args.m2p_interval_ms,
            report_path=args.report,
            transport=args.transport,
        ))
    except (OSError, SessionError, websockets.exceptions.WebSocketException) as e:
        print(f"vcclient: session failed: {e}", file=sys.stderr)
        return 1
    m2p = report["m2p_ms"]
    pos = report["pos_err_m"]
    print(f"frames={report['frames_received']} bitrate={report['bitrate_bps'] / 1000:.0f} kbps")
    if m2p["count"]:
        print(f"m2p mean={m2p['mean']:.1f} ms p95={m2p['p95']:.1f} ms unmatched={report['m2p_unmatched']}")
    if pos["count"]:
        print(f"pos_err mean={pos['mean'] * 1000:.3f} mm p95={pos['p95'] * 1000:.3f} mm")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
