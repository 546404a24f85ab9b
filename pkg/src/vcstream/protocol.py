"""Signaling message codec and per-connection session state machine.

Control traffic is JSON over WebSocket text frames; media rides as binary
frames on the same connection (or UDP datagrams, see transport). Both server
and client validate against the same payload schemas and drive the same
transition table, so a violation is detected on whichever side sees it first.

Wire shape of every message::

    {"type": "<msg type>", "seq": <u64>, "payload": {...}}

Unknown payload fields are ignored by validation and passed through, which
lets clients extend payloads (forward compatibility).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping

import numpy as np

from . import quat
from .object_pool import ObjectKind, ObjectState

PROTOCOL_VERSION = 1

_U64_MAX = 2**64 - 1


class MsgType(str, Enum):
    HELLO = "hello"
    SCENE_REQUEST = "scene_request"
    SCENE_DESCRIPTION = "scene_description"
    STREAM_START = "stream_start"
    STREAM_STOP = "stream_stop"
    POSE_UPDATE = "pose_update"
    OBJECT_CONTROL = "object_control"
    MARKER_REQUEST = "marker_request"
    MARKER_ACK = "marker_ack"
    STATS = "stats"
    ERROR = "error"
    BYE = "bye"


class ProtocolError(Exception):
    pass


class ParseError(ProtocolError):
    pass


class UnknownType(ProtocolError):
    pass


class SchemaError(ProtocolError):
    def __init__(self, field_name: str, detail: str = ""):
        self.field = field_name
        super().__init__(f"schema violation at {field_name!r}" + (f": {detail}" if detail else ""))


class EncodeError(ProtocolError):
    def __init__(self, field_name: str, detail: str = ""):
        self.field = field_name
        super().__init__(f"cannot encode, bad field {field_name!r}" + (f": {detail}" if detail else ""))


class ProtocolViolation(ProtocolError):
    def __init__(self, state: "ConnState", msg_type: MsgType):
        self.state = state
        self.msg_type = msg_type
        super().__init__(f"message {msg_type.value!r} is illegal in state {state.name}")


@dataclass(frozen=True)
class SignalMessage:
    msg_type: MsgType
    seq: int
    payload: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# payload schemas


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_uint(v) -> bool:
    return _is_int(v) and v >= 0


def _is_num(v) -> bool:
    if isinstance(v, bool):
        return False
    return isinstance(v, (int, float)) and math.isfinite(v)


def _is_str(v) -> bool:
    return isinstance(v, str)


def _is_vec(v, n: int) -> bool:
    return isinstance(v, (list, tuple)) and len(v) == n and all(_is_num(c) for c in v)


def _is_unit_quat(v) -> bool:
    return _is_vec(v, 4) and quat.is_unit(np.asarray(v, dtype=np.float64))


def _check_transform(t) -> str | None:
    """Return the bad sub-field name, or None if the transform dict is valid."""
    if not isinstance(t, Mapping):
        return "transform"
    if not _is_vec(t.get("position"), 3):
        return "transform.position"
    if not _is_unit_quat(t.get("rotation")):
        return "transform.rotation"
    if not _is_vec(t.get("scale"), 3) or any(c <= 0 for c in t["scale"]):
        return "transform.scale"
    return None


_CONTROL_VALUE_LEN = {"set_transform": 10, "translate": 3, "rotate": 4, "scale": 3}

# flat field -> predicate tables; messages with structural payloads get
# dedicated validators below
_SCHEMAS: dict[MsgType, dict[str, Any]] = {
    MsgType.HELLO: {"client_name": _is_str, "protocol_version": _is_uint},
    MsgType.SCENE_REQUEST: {},
    MsgType.STREAM_START: {},
    MsgType.STREAM_STOP: {},
    MsgType.POSE_UPDATE: {
        "timestamp_us": _is_uint,
        "position": lambda v: _is_vec(v, 3),
        "rotation": _is_unit_quat,
    },
    MsgType.MARKER_REQUEST: {"marker_id": lambda v: _is_uint(v) and v < 2**16},
    MsgType.MARKER_ACK: {
        "marker_id": lambda v: _is_uint(v) and v < 2**16,
        "server_timestamp_us": _is_uint,
    },
    MsgType.STATS: {"m2p_ms": _is_num, "pos_err_m": _is_num, "ang_err_deg": _is_num},
    MsgType.ERROR: {"code": _is_str, "detail": _is_str},
    MsgType.BYE: {},
}


def _validate_object_control(payload: Mapping):
    if not _is_uint(payload.get("id")):
        raise SchemaError("id")
    op = payload.get("op")
    if op not in _CONTROL_VALUE_LEN:
        raise SchemaError("op", f"unknown op {op!r}")
    value = payload.get("value")
    if not _is_vec(value, _CONTROL_VALUE_LEN[op]):
        raise SchemaError("value", f"{op} needs {_CONTROL_VALUE_LEN[op]} components")
    if op == "rotate" and not _is_unit_quat(value):
        raise SchemaError("value", "rotate value must be a unit quaternion")
    if op == "set_transform":
        if not _is_unit_quat(value[3:7]):
            raise SchemaError("value", "rotation part must be a unit quaternion")
        if any(c <= 0 for c in value[7:10]):
            raise SchemaError("value", "scale part must be > 0")
    if op == "scale" and any(c <= 0 for c in value):
        raise SchemaError("value", "scale factors must be > 0")


def _validate_scene_description(payload: Mapping):
    objects = payload.get("objects")
    if not isinstance(objects, list):
        raise SchemaError("objects")
    cameras = 0
    for i, obj in enumerate(objects):
        if not isinstance(obj, Mapping):
            raise SchemaError(f"objects[{i}]")
        if not _is_uint(obj.get("id")):
            raise SchemaError(f"objects[{i}].id")
        if not _is_str(obj.get("name")):
            raise SchemaError(f"objects[{i}].name")
        if obj.get("kind") not in ("camera", "mesh"):
            raise SchemaError(f"objects[{i}].kind")
        bad = _check_transform(obj.get("transform"))
        if bad is not None:
            raise SchemaError(f"objects[{i}].{bad}")
        cameras += obj["kind"] == "camera"
    if cameras != 1:
        raise SchemaError("objects", f"expected exactly one camera, found {cameras}")
    video = payload.get("video")
    if not isinstance(video, Mapping):
        raise SchemaError("video")
    for k in ("width", "height", "fps"):
        if not _is_uint(video.get(k)) or video[k] <= 0:
            raise SchemaError(f"video.{k}")
    if video["width"] % 2 or video["height"] % 2:
        raise SchemaError("video", "frame dimensions must be even")
    if not _is_str(video.get("codec")):
        raise SchemaError("video.codec")


def validate_payload(msg_type: MsgType, payload) -> None:
    """Raise SchemaError if payload does not match the msg_type schema.

    Extra fields are permitted and left untouched.
    """
    if not isinstance(payload, Mapping):
        raise SchemaError("payload", "must be a JSON object")
    if msg_type is MsgType.OBJECT_CONTROL:
        _validate_object_control(payload)
        return
    if msg_type is MsgType.SCENE_DESCRIPTION:
        _validate_scene_description(payload)
        return
    for name, check in _SCHEMAS[msg_type].items():
        if name not in payload:
            raise SchemaError(name, "missing")
        if not check(payload[name]):
            raise SchemaError(name)


def encode_message(msg: SignalMessage) -> bytes:
    """Serialize a message to UTF-8 JSON; inverse of decode_message."""
    try:
        msg_type = MsgType(msg.msg_type)
    except ValueError:
        raise EncodeError("type", f"unknown message type {msg.msg_type!r}") from None
    if not _is_uint(msg.seq) or msg.seq > _U64_MAX:
        raise EncodeError("seq", "must be an unsigned 64-bit integer")
    try:
        validate_payload(msg_type, msg.payload)
    except SchemaError as e:
        raise EncodeError(e.field, str(e)) from e
    doc = {"type": msg_type.value, "seq": msg.seq, "payload": msg.payload}
    return json.dumps(doc, separators=(",", ":")).encode("utf-8")


def decode_message(raw: bytes | str) -> SignalMessage:
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ParseError(f"not UTF-8 text: {e}") from e
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed JSON: {e}") from e
    if not isinstance(doc, Mapping):
        raise ParseError("top level is not a JSON object")
    type_name = doc.get("type")
    if not isinstance(type_name, str):
        raise SchemaError("type", "missing or not a string")
    try:
        msg_type = MsgType(type_name)
    except ValueError:
        raise UnknownType(f"unknown message type {type_name!r}") from None
    seq = doc.get("seq")
    if not _is_uint(seq) or seq > _U64_MAX:
        raise SchemaError("seq", "missing or not an unsigned 64-bit integer")
    payload = doc.get("payload")
    validate_payload(msg_type, payload)
    return SignalMessage(msg_type, seq, dict(payload))


# ---------------------------------------------------------------------------
# session state machine


class ConnState(Enum):
    CONNECTED = "CONNECTED"
    SCENE_SENT = "SCENE_SENT"
    STREAMING = "STREAMING"
    CLOSED = "CLOSED"


class Role(str, Enum):
    SERVER = "server"
    CLIENT = "client"


class Direction(str, Enum):
    SENT = "sent"
    RECEIVED = "received"


@dataclass(frozen=True)
class SessionState:
    role: Role
    state: ConnState = ConnState.CONNECTED
    last_seen_seq: int = 0


# (state, msg_type) -> next state; bye and error close from any state and are
# handled before the lookup. The protocol is symmetric: the same table applies
# to sent and received messages, ordering rather than authorship is enforced.
_TRANSITIONS: dict[tuple[ConnState, MsgType], ConnState] = {
    (ConnState.CONNECTED, MsgType.HELLO): ConnState.CONNECTED,
    (ConnState.CONNECTED, MsgType.SCENE_REQUEST): ConnState.CONNECTED,
    (ConnState.CONNECTED, MsgType.SCENE_DESCRIPTION): ConnState.SCENE_SENT,
    (ConnState.SCENE_SENT, MsgType.STREAM_START): ConnState.STREAMING,
    (ConnState.STREAMING, MsgType.POSE_UPDATE): ConnState.STREAMING,
    (ConnState.STREAMING, MsgType.OBJECT_CONTROL): ConnState.STREAMING,
    (ConnState.STREAMING, MsgType.MARKER_REQUEST): ConnState.STREAMING,
    (ConnState.STREAMING, MsgType.MARKER_ACK): ConnState.STREAMING,
    (ConnState.STREAMING, MsgType.STATS): ConnState.STREAMING,
    (ConnState.STREAMING, MsgType.STREAM_STOP): ConnState.CLOSED,
}


def advance_state(s: SessionState, msg_type: MsgType | str, direction: Direction | str) -> SessionState:
    """Pure transition function; raises ProtocolViolation on an illegal move.

    The receiver of an illegal message must answer with an error message and
    close; the error/bye moves themselves are legal from every open state.
    """
    msg_type = MsgType(msg_type)
    Direction(direction)  # validate, the table is direction-symmetric
    if s.state is ConnState.CLOSED:
        if msg_type is MsgType.BYE:
            return s
        raise ProtocolViolation(s.state, msg_type)
    if msg_type in (MsgType.BYE, MsgType.ERROR):
        return replace(s, state=ConnState.CLOSED)
    nxt = _TRANSITIONS.get((s.state, msg_type))
    if nxt is None:
        raise ProtocolViolation(s.state, msg_type)
    return replace(s, state=nxt)


def observe_seq(s: SessionState, seq: int) -> tuple[SessionState, bool]:
    """Track the peer's seq; returns (state, accepted).

    Messages whose seq is not strictly greater than the last seen one are
    dropped by the caller (logged, never fatal): duplicate or reordered
    control updates are stale state, not errors.
    """
    if seq <= s.last_seen_seq:
        return s, False
    return replace(s, last_seen_seq=seq), True


# ---------------------------------------------------------------------------
# scene description helpers


@dataclass
class VideoParams:
    width: int
    height: int
    fps: int
    codec: str

    def to_payload(self) -> dict:
        return {"width": self.width, "height": self.height, "fps": self.fps, "codec": self.codec}

    @classmethod
    def from_payload(cls, d: Mapping) -> "VideoParams":
        return cls(int(d["width"]), int(d["height"]), int(d["fps"]), str(d["codec"]))


@dataclass
class SceneDescription:
    objects: list[ObjectState]
    video: VideoParams

    def to_payload(self) -> dict:
        return {"objects": [o.to_payload() for o in self.objects], "video": self.video.to_payload()}

    @classmethod
    def from_payload(cls, d: Mapping) -> "SceneDescription":
        return cls(
            objects=[ObjectState.from_payload(o) for o in d["objects"]],
            video=VideoParams.from_payload(d["video"]),
        )

    def camera(self) -> ObjectState:
        return next(o for o in self.objects if o.kind is ObjectKind.CAMERA)


# ---------------------------------------------------------------------------
# message builders


def make_hello(seq: int, client_name: str) -> SignalMessage:
    return SignalMessage(MsgType.HELLO, seq, {"client_name": client_name, "protocol_version": PROTOCOL_VERSION})


def make_scene_request(seq: int) -> SignalMessage:
    return SignalMessage(MsgType.SCENE_REQUEST, seq, {})


def make_scene_description(seq: int, scene: SceneDescription) -> SignalMessage:
    return SignalMessage(MsgType.SCENE_DESCRIPTION, seq, scene.to_payload())


def make_stream_start(seq: int, **extra) -> SignalMessage:
    return SignalMessage(MsgType.STREAM_START, seq, dict(extra))


def make_stream_stop(seq: int) -> SignalMessage:
    return SignalMessage(MsgType.STREAM_STOP, seq, {})


def make_pose_update(seq: int, timestamp_us: int, position, rotation) -> SignalMessage:
    return SignalMessage(MsgType.POSE_UPDATE, seq, {
        "timestamp_us": int(timestamp_us),
        "position": [float(v) for v in position],
        "rotation": [float(v) for v in rotation],
    })


def make_object_control(seq: int, oid: int, op: str, value) -> SignalMessage:
    return SignalMessage(MsgType.OBJECT_CONTROL, seq, {
        "id": int(oid),
        "op": str(op),
        "value": [float(v) for v in value],
    })


def make_marker_request(seq: int, marker_id: int) -> SignalMessage:
    return SignalMessage(MsgType.MARKER_REQUEST, seq, {"marker_id": int(marker_id)})


def make_marker_ack(seq: int, marker_id: int, server_timestamp_us: int) -> SignalMessage:
    return SignalMessage(MsgType.MARKER_ACK, seq, {
        "marker_id": int(marker_id),
        "server_timestamp_us": int(server_timestamp_us),
    })


def make_stats(seq: int, m2p_ms: float, pos_err_m: float, ang_err_deg: float, **extra) -> SignalMessage:
    payload = {"m2p_ms": float(m2p_ms), "pos_err_m": float(pos_err_m), "ang_err_deg": float(ang_err_deg)}
    payload.update(extra)
    return SignalMessage(MsgType.STATS, seq, payload)


def make_error(seq: int, code: str, detail: str) -> SignalMessage:
    return SignalMessage(MsgType.ERROR, seq, {"code": code, "detail": detail})


def make_bye(seq: int) -> SignalMessage:
    return SignalMessage(MsgType.BYE, seq, {})
