"""RenderSession engine tests plus deterministic virtual-clock sessions."""

import numpy as np
import pytest

from harness import run_virtual_session

from vcstream import protocol, traces
from vcstream.client import detect_marker, pick_marker_ids
from vcstream.pixel import CodecId, StreamDecoder, rgb_to_yuv
from vcstream.protocol import ConnState, MsgType
from vcstream.server import RenderSession, ServerConfig
from vcstream.transport import parse_packet


def small_config(**kw):
    defaults = dict(width=64, height=64, fps=60, codec="delta", gop_n=30,
                    mtu_payload=1200, lookahead_us=16_667, log_level="quiet")
    defaults.update(kw)
    return ServerConfig(**defaults)


def handshake(session):
    session.handle_message(protocol.make_hello(1, "t"))
    replies = session.handle_message(protocol.make_scene_request(2))
    session.handle_message(protocol.make_stream_start(3))
    return replies


def test_scene_description_lists_camera_and_cube():
    session = RenderSession(small_config())
    replies = session.handle_message(protocol.make_scene_request(1))
    assert len(replies) == 1 and replies[0].msg_type is MsgType.SCENE_DESCRIPTION
    scene = protocol.SceneDescription.from_payload(replies[0].payload)
    assert [o.kind.value for o in scene.objects] == ["camera", "mesh"]
    assert scene.video.codec == "delta"
    assert session.state.state is ConnState.SCENE_SENT


def test_pose_update_before_scene_closes_with_error():
    session = RenderSession(small_config())
    out = session.handle_message(protocol.make_pose_update(1, 0, (0, 0, 3), (0, 0, 0, 1)))
    assert len(out) == 1 and out[0].msg_type is MsgType.ERROR
    assert out[0].payload["code"] == "protocol_violation"
    assert session.closed


def test_stale_seq_dropped_without_error():
    session = RenderSession(small_config())
    handshake(session)
    session.handle_message(protocol.make_pose_update(10, 100, (0, 0, 3), (0, 0, 0, 1)))
    out = session.handle_message(protocol.make_pose_update(9, 200, (1, 0, 3), (0, 0, 0, 1)))
    assert out == [] and not session.closed
    assert session.stats.stale_dropped == 1
    # camera still has the first pose
    assert session.pool.snapshot()[session.camera_id].transform.position[0] == 0.0


def test_bad_object_control_closes():
    session = RenderSession(small_config())
    handshake(session)
    out = session.handle_message(protocol.make_object_control(4, 17, "translate", (1, 0, 0)))
    assert out and out[0].msg_type is MsgType.ERROR and out[0].payload["code"] == "bad_control"
    assert session.closed


def test_registration_closed_after_stream_start():
    session = RenderSession(small_config())
    handshake(session)
    assert session.pool.sealed


def test_first_frame_is_keyframe_and_ticks_produce_packets():
    session = RenderSession(small_config())
    handshake(session)
    r0 = session.tick(0)
    r1 = session.tick(16_667)
    p0 = parse_packet(r0.packets[0])
    p1 = parse_packet(r1.packets[0])
    assert p0.is_keyframe and p0.frame_seq == 0
    assert not p1.is_keyframe and p1.frame_seq == 1


def test_tick_without_any_pose_uses_initial_camera():
    session = RenderSession(small_config(codec="raw"))
    handshake(session)
    result = session.tick(0)
    pose = parse_packet(result.packets[0]).render_pose
    assert pose[:3] == (0.0, 0.0, 3.0)
    assert pose[3:] == (0.0, 0.0, 0.0, 1.0)


def test_marker_replaces_exactly_one_frame_and_acks():
    cfg = small_config(codec="raw")
    session = RenderSession(cfg)
    handshake(session)
    session.tick(0)
    session.handle_message(protocol.make_marker_request(4, 13))
    r1 = session.tick(16_667)
    r2 = session.tick(33_334)
    assert r1.marker_id == 13 and r2.marker_id is None
    assert parse_packet(r1.packets[0]).is_marker
    assert not parse_packet(r2.packets[0]).is_marker
    assert len(r1.messages) == 1 and r1.messages[0].msg_type is MsgType.MARKER_ACK
    assert r1.messages[0].payload["marker_id"] == 13
    # decode the marker frame and read the id back
    sd = StreamDecoder(cfg.width, cfg.height)
    frame = sd.decode(_delivered(r1))
    assert frame is not None and detect_marker(frame) == 13


def _delivered(result):
    from vcstream.pixel import EncodedFrame
    payload = b"".join(parse_packet(p).payload for p in result.packets)
    head = parse_packet(result.packets[0])
    return EncodedFrame(CodecId(head.codec_id), head.frame_seq, head.is_keyframe, payload)


def test_applied_control_seq_covers_visible_effects():
    session = RenderSession(small_config())
    handshake(session)
    session.handle_message(protocol.make_pose_update(4, 1000, (0, 0, 3), (0, 0, 0, 1)))
    session.handle_message(protocol.make_object_control(5, 1, "scale", (2.0, 2.0, 2.0)))
    result = session.tick(0)
    assert parse_packet(result.packets[0]).applied_control_seq == 5


def test_scale_control_grows_rendered_cube():
    cfg = small_config(codec="raw")
    session = RenderSession(cfg)
    handshake(session)
    sd = StreamDecoder(cfg.width, cfg.height)
    f_before = sd.decode(_delivered(session.tick(0)))
    session.handle_message(protocol.make_object_control(4, 1, "scale", (2.0, 2.0, 2.0)))
    f_after = sd.decode(_delivered(session.tick(16_667)))

    bg_y = rgb_to_yuv(0, 0, 0)[0]
    covered = lambda f: int((np.asarray(f.i420_planes()[0]) != bg_y).sum())
    assert covered(f_after) > covered(f_before) > 0


# ---------------------------------------------------------------------------
# virtual-clock sessions


def test_virtual_session_static_trace_registration_error_is_zero():
    cfg = small_config()
    trace = traces.generate_trace("static", 1.0, 60.0, position=(0.0, 0.0, 3.0))
    receiver, session, report, _ = run_virtual_session(cfg, trace, 60)
    assert report["frames_received"] > 30
    # (0, 0, 3) survives the f32 header roundtrip exactly
    assert report["pos_err_m"]["mean"] == 0.0
    assert report["ang_err_deg"]["mean"] == 0.0


def test_virtual_session_report_is_deterministic():
    cfg = small_config()
    trace = traces.generate_trace("sinusoid", 1.5, 60.0)
    mids = pick_marker_ids(4)
    markers = [(200_000 + 150_000 * i, mids[i]) for i in range(4)]

    def run():
        _, _, report, _ = run_virtual_session(
            cfg, trace, 90, marker_requests=markers, loss=0.05, reorder=0.05, seed=7,
        )
        return report

    assert run() == run()


def test_virtual_session_m2p_has_one_frame_floor():
    cfg = small_config()
    trace = traces.generate_trace("static", 1.0, 60.0)
    mids = pick_marker_ids(5)
    markers = [(150_000 + 120_000 * i, mids[i]) for i in range(5)]
    _, _, report, acks = run_virtual_session(cfg, trace, 70, marker_requests=markers)
    assert report["m2p_ms"]["count"] == 5 and report["m2p_unmatched"] == 0
    assert all(r["m2p_us"] >= round(1e6 / cfg.fps) for r in report["m2p_records"])
    assert [a.payload["marker_id"] for a in acks] == mids


def test_virtual_session_extra_latency_shifts_m2p():
    trace = traces.generate_trace("static", 1.0, 60.0)
    mids = pick_marker_ids(5)
    markers = [(150_000 + 120_000 * i, mids[i]) for i in range(5)]
    _, _, base, _ = run_virtual_session(small_config(), trace, 70, marker_requests=markers)
    _, _, delayed, _ = run_virtual_session(
        small_config(extra_latency_ms=50.0), trace, 70, marker_requests=markers
    )
    diff = delayed["m2p_ms"]["mean"] - base["m2p_ms"]["mean"]
    assert diff == pytest.approx(50.0, abs=1e-6)  # virtual clock shifts exactly


def test_interleaved_markers_match_their_own_ids():
    """Two overlapping in-flight markers pair with their own ids only."""
    cfg = small_config()
    trace = traces.generate_trace("static", 1.0, 60.0)
    mids = pick_marker_ids(2)
    markers = [(200_000, mids[0]), (205_000, mids[1])]  # both pending at once
    _, _, report, _ = run_virtual_session(cfg, trace, 70, marker_requests=markers)
    assert report["m2p_unmatched"] == 0
    by_id = {r["marker_id"]: r for r in report["m2p_records"]}
    assert set(by_id) == set(mids)
    assert by_id[mids[0]]["t_detect_us"] < by_id[mids[1]]["t_detect_us"]


def test_stats_need_keyframe_forces_one():
    session = RenderSession(small_config(gop_n=1000))
    handshake(session)
    session.tick(0)
    delta = session.tick(16_667)
    assert not parse_packet(delta.packets[0]).is_keyframe
    session.handle_message(
        protocol.SignalMessage(MsgType.STATS, 4, {
            "m2p_ms": 0.0, "pos_err_m": 0.0, "ang_err_deg": 0.0, "need_keyframe": True,
        })
    )
    forced = session.tick(33_334)
    assert parse_packet(forced.packets[0]).is_keyframe


def test_virtual_session_ar_beats_zoh_on_sinusoid():
    trace = traces.generate_trace("sinusoid", 2.0, 60.0, amplitude=0.5, freq_hz=1.0)
    _, _, ar, _ = run_virtual_session(small_config(predictor="ar"), trace, 120)
    _, _, zoh, _ = run_virtual_session(small_config(predictor="zoh"), trace, 120)
    assert ar["pos_err_m"]["count"] > 50 and zoh["pos_err_m"]["count"] > 50
    assert ar["pos_err_m"]["mean"] < zoh["pos_err_m"]["mean"]
