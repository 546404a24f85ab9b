// A scripted UI session may only ever emit state-machine-legal messages.

import { describe, expect, it } from "vitest";

import { OrbitCamera } from "../src/orbit.js";
import { MarkerIdAllocator } from "../src/markers.js";
import { advanceState, ProtocolViolation, Session, SignalMessage } from "../src/protocol.js";

function serverScene(seq: number): string {
  return JSON.stringify({
    type: "scene_description",
    seq,
    payload: {
      objects: [
        { id: 0, name: "camera", kind: "camera", transform: { position: [0, 0, 3], rotation: [0, 0, 0, 1], scale: [1, 1, 1] } },
        { id: 1, name: "cube", kind: "mesh", transform: { position: [0, 0, 0], rotation: [0, 0, 0, 1], scale: [1, 1, 1] } },
      ],
      video: { width: 128, height: 96, fps: 60, codec: "delta" },
    },
  });
}

describe("scripted session protocol conformance", () => {
  it("connect, orbit drag, scale slider and latency overlay emit only legal messages", () => {
    const session = new Session();
    session.send("hello", { client_name: "browser", protocol_version: 1 });
    session.send("scene_request", {});
    const scene = session.receive(serverScene(1));
    expect(scene?.type).toBe("scene_description");
    session.send("stream_start", {});
    expect(session.state).toBe("STREAMING");

    const camera = new OrbitCamera(3);
    for (let i = 0; i < 30; i++) {
      camera.drag(12, 3, 640);
      const pose = camera.pose();
      session.send("pose_update", { timestamp_us: i * 16_667, position: pose.position, rotation: pose.rotation });
    }
    for (const scale of [1.2, 1.6, 2.0]) {
      session.send("object_control", {
        id: 1, op: "set_transform",
        value: [0, 0, 0, 0, 0, 0, 1, scale, scale, scale],
      });
    }
    const alloc = new MarkerIdAllocator();
    for (let i = 0; i < 5; i++) {
      session.send("marker_request", { marker_id: alloc.take() });
    }
    session.send("stats", { m2p_ms: 30.5, pos_err_m: 0.01, ang_err_deg: 0.2 });
    session.send("bye", {});
    expect(session.state).toBe("CLOSED");

    // replay every sent message through the bare transition table
    let state: Parameters<typeof advanceState>[0] = "CONNECTED";
    let sceneSent = false;
    let lastSeq = 0;
    for (const msg of session.sent as SignalMessage[]) {
      if (msg.type === "stream_start" && !sceneSent) {
        state = advanceState(state, "scene_description");
        sceneSent = true;
      }
      state = advanceState(state, msg.type); // throws if anything was illegal
      expect(msg.seq).toBeGreaterThan(lastSeq);
      lastSeq = msg.seq;
    }
  });

  it("refuses to emit a pose update before streaming", () => {
    const session = new Session();
    session.send("hello", { client_name: "browser", protocol_version: 1 });
    expect(() =>
      session.send("pose_update", { timestamp_us: 0, position: [0, 0, 3], rotation: [0, 0, 0, 1] }),
    ).toThrow(ProtocolViolation);
  });

  it("drops stale incoming seq without state change", () => {
    const session = new Session();
    session.send("hello", { client_name: "x", protocol_version: 1 });
    session.send("scene_request", {});
    expect(session.receive(serverScene(5))).not.toBeNull();
    expect(session.receive(serverScene(5))).toBeNull();
    expect(session.state).toBe("SCENE_SENT");
  });
});
