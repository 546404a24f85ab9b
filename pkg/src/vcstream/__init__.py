"""Remote-rendering stream testbed.

A server renders a 3D scene from the client's predicted future pose and
streams the 2D view as losslessly coded frames; a headless client replays
pose traces, decodes, and measures motion-to-photon latency and pose
registration error end to end.
"""

from .frames import Frame, I420, RGBA8, read_golden, write_golden
from .object_pool import ObjectKind, ObjectPool, ObjectState, Transform, UpdateOp
from .pixel import CodecId, Decoder, EncodedFrame, Encoder, StreamDecoder, i420_to_rgba, rgba_to_i420
from .predictor import AutoRegressivePredictor, Pose, PredictorConfig, ZeroOrderHold, make_predictor
from .protocol import MsgType, SceneDescription, SessionState, SignalMessage, decode_message, encode_message
from .renderer import CameraIntrinsics, MeshAsset, render, render_marker, unit_cube
from .traces import generate_trace, load_trace_csv, save_trace_csv
from .transport import FrameMeta, FramePacket, ReassemblyBuffer, lossy_channel, packetize, parse_packet, serialize_packet

__version__ = "0.1.0"
