/** Signaling messages and the session state machine, mirroring the server.
 *
 * Every outbound message passes through the transition table before it is
 * handed to the socket, so the UI cannot emit an out-of-order message; the
 * same table validates what the server sends us.
 */

export const PROTOCOL_VERSION = 1;

export type MsgType =
  | "hello"
  | "scene_request"
  | "scene_description"
  | "stream_start"
  | "stream_stop"
  | "pose_update"
  | "object_control"
  | "marker_request"
  | "marker_ack"
  | "stats"
  | "error"
  | "bye";

export interface SignalMessage {
  type: MsgType;
  seq: number;
  payload: Record<string, unknown>;
}

export type ConnState = "CONNECTED" | "SCENE_SENT" | "STREAMING" | "CLOSED";

export class ProtocolViolation extends Error {
  constructor(readonly state: ConnState, readonly msgType: MsgType) {
    super(`message '${msgType}' is illegal in state ${state}`);
  }
}

const TRANSITIONS: Record<string, ConnState> = {
  "CONNECTED:hello": "CONNECTED",
  "CONNECTED:scene_request": "CONNECTED",
  "CONNECTED:scene_description": "SCENE_SENT",
  "SCENE_SENT:stream_start": "STREAMING",
  "STREAMING:pose_update": "STREAMING",
  "STREAMING:object_control": "STREAMING",
  "STREAMING:marker_request": "STREAMING",
  "STREAMING:marker_ack": "STREAMING",
  "STREAMING:stats": "STREAMING",
  "STREAMING:stream_stop": "CLOSED",
};

export function advanceState(state: ConnState, msgType: MsgType): ConnState {
  if (state === "CLOSED") {
    if (msgType === "bye") return state;
    throw new ProtocolViolation(state, msgType);
  }
  if (msgType === "bye" || msgType === "error") return "CLOSED";
  const next = TRANSITIONS[`${state}:${msgType}`];
  if (next === undefined) throw new ProtocolViolation(state, msgType);
  return next;
}

/** Outbound guard and inbound tracker for one connection. */
export class Session {
  state: ConnState = "CONNECTED";
  private outSeq = 0;
  private lastSeenSeq = 0;
  readonly sent: SignalMessage[] = [];

  /** Build, validate and record an outbound message; returns its JSON text. */
  send(type: MsgType, payload: Record<string, unknown> = {}): string {
    this.state = advanceState(this.state, type); // throws on an illegal move
    const msg: SignalMessage = { type, seq: ++this.outSeq, payload };
    this.sent.push(msg);
    return JSON.stringify(msg);
  }

  /** Parse an inbound text frame; returns null for stale (non-increasing) seq. */
  receive(raw: string): SignalMessage | null {
    const doc = JSON.parse(raw) as SignalMessage;
    if (typeof doc.type !== "string" || typeof doc.seq !== "number") {
      throw new Error("malformed signaling message");
    }
    if (doc.seq <= this.lastSeenSeq) return null;
    this.lastSeenSeq = doc.seq;
    this.state = advanceState(this.state, doc.type);
    return doc;
  }
}

export interface SceneObject {
  id: number;
  name: string;
  kind: "camera" | "mesh";
  transform: { position: number[]; rotation: number[]; scale: number[] };
}

export interface SceneDescription {
  objects: SceneObject[];
  video: { width: number; height: number; fps: number; codec: string };
}
