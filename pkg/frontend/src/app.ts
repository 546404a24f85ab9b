/** Browser viewer/controller: canvas display, orbit camera, object sliders,
 * background keying and a motion-to-photon overlay.
 */

import { CODEC_DELTA, CODEC_RAW, i420ToRgba, StreamDecoder } from "./codec.js";
import { applyBackgroundKey } from "./keying.js";
import { detectMarker, MarkerIdAllocator } from "./markers.js";
import { axisAngle, OrbitCamera, PoseThrottle } from "./orbit.js";
import { parsePacket, ReassemblyBuffer } from "./packets.js";
import { SceneDescription, Session } from "./protocol.js";
import { BitrateMeter, RollingStats } from "./stats.js";

const $ = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;

class ViewerApp {
  private ws: WebSocket | null = null;
  private session = new Session();
  private scene: SceneDescription | null = null;
  private reassembler = new ReassemblyBuffer();
  private decoder: StreamDecoder | null = null;
  private camera = new OrbitCamera(3.0);
  private throttle = new PoseThrottle();
  private keying = false;
  private overlay = false;
  private markerIds = new MarkerIdAllocator();
  private pendingMarkers = new Map<number, number>(); // id -> request ms
  private m2p = new RollingStats(40);
  private bitrate = new BitrateMeter();
  private frames = 0;
  private fpsWindow: number[] = [];
  private overlayTimer: number | null = null;
  private dragging = false;
  private lastPointer: [number, number] = [0, 0];
  private meshId: number | null = null;

  private canvas = $<HTMLCanvasElement>("view");
  private ctx = this.canvas.getContext("2d")!;
  private hud = $<HTMLElement>("hud");
  private status = $<HTMLElement>("status");

  constructor() {
    $<HTMLButtonElement>("connect").onclick = () => this.connect();
    $<HTMLInputElement>("keying").onchange = (e) => {
      this.keying = (e.target as HTMLInputElement).checked;
    };
    $<HTMLInputElement>("overlay").onchange = (e) => {
      this.overlay = (e.target as HTMLInputElement).checked;
      this.scheduleOverlay();
    };
    $<HTMLInputElement>("rotate").oninput = (e) => this.sendRotate(+(e.target as HTMLInputElement).value);
    $<HTMLInputElement>("scale").oninput = (e) => this.sendScale(+(e.target as HTMLInputElement).value);
    this.canvas.onpointerdown = (e) => {
      this.dragging = true;
      this.lastPointer = [e.clientX, e.clientY];
      this.canvas.setPointerCapture(e.pointerId);
    };
    this.canvas.onpointerup = () => (this.dragging = false);
    this.canvas.onpointermove = (e) => this.onDrag(e);
    this.canvas.onwheel = (e) => {
      e.preventDefault();
      this.camera.zoom(e.deltaY > 0 ? 1.1 : 1 / 1.1);
      this.pushPose();
    };
  }

  private setStatus(text: string) {
    this.status.textContent = text;
  }

  private send(type: Parameters<Session["send"]>[0], payload: Record<string, unknown> = {}) {
    if (!this.ws || this.ws.readyState !== WebSocket.OPEN) return;
    this.ws.send(this.session.send(type, payload)); // guard throws on illegal moves
  }

  connect() {
    const url = $<HTMLInputElement>("url").value;
    this.session = new Session();
    this.reassembler = new ReassemblyBuffer();
    this.decoder = null;
    this.scene = null;
    this.ws = new WebSocket(url);
    this.ws.binaryType = "arraybuffer";
    this.setStatus(`connecting to ${url}`);
    this.ws.onopen = () => {
      this.send("hello", { client_name: "browser", protocol_version: 1 });
      this.send("scene_request", {});
    };
    this.ws.onmessage = (ev) => {
      if (typeof ev.data === "string") this.onSignal(ev.data);
      else this.onMedia(new Uint8Array(ev.data as ArrayBuffer));
    };
    this.ws.onclose = () => {
      this.setStatus("disconnected (press connect to retry)");
      if (this.overlayTimer !== null) clearInterval(this.overlayTimer);
      this.overlayTimer = null;
    };
    this.ws.onerror = () => this.setStatus("connection error");
  }

  private onSignal(raw: string) {
    const msg = this.session.receive(raw);
    if (msg === null) return;
    if (msg.type === "scene_description") {
      this.scene = msg.payload as unknown as SceneDescription;
      const video = this.scene.video;
      this.canvas.width = video.width;
      this.canvas.height = video.height;
      this.decoder = new StreamDecoder(video.width, video.height);
      const mesh = this.scene.objects.find((o) => o.kind === "mesh");
      this.meshId = mesh ? mesh.id : null;
      this.send("stream_start", {});
      this.setStatus(`streaming ${video.width}x${video.height}@${video.fps} (${video.codec})`);
      this.scheduleOverlay();
    } else if (msg.type === "error") {
      this.setStatus(`server error: ${JSON.stringify(msg.payload)}`);
    }
  }

  private onMedia(raw: Uint8Array) {
    const now = performance.now();
    this.bitrate.add(raw.length, now);
    const delivered = this.reassembler.add(parsePacket(raw));
    if (delivered === null || this.decoder === null) return;
    if (delivered.codecId !== CODEC_RAW && delivered.codecId !== CODEC_DELTA) return;
    const frame = this.decoder.decode(delivered.frameSeq, delivered.keyframe, delivered.payload);
    if (frame === null) return;
    if (delivered.marker) {
      // marker frames carry measurement ids and are excluded from display
      const id = detectMarker(frame);
      if (id !== null && this.pendingMarkers.has(id)) {
        this.m2p.push(now - this.pendingMarkers.get(id)!);
        this.pendingMarkers.delete(id);
      }
      return;
    }
    this.frames++;
    this.fpsWindow.push(now);
    while (this.fpsWindow.length && this.fpsWindow[0] < now - 1000) this.fpsWindow.shift();
    const rgba = i420ToRgba(frame);
    if (this.keying) applyBackgroundKey(rgba, [0, 0, 0]);
    this.ctx.putImageData(new ImageData(rgba, frame.width, frame.height), 0, 0);
    this.updateHud();
  }

  private onDrag(e: PointerEvent) {
    if (!this.dragging || this.session.state !== "STREAMING") return;
    const dx = e.clientX - this.lastPointer[0];
    const dy = e.clientY - this.lastPointer[1];
    this.lastPointer = [e.clientX, e.clientY];
    this.camera.drag(dx, dy, this.canvas.width);
    this.pushPose();
  }

  private pushPose() {
    if (this.session.state !== "STREAMING" || !this.throttle.ready()) return;
    const pose = this.camera.pose();
    this.send("pose_update", {
      timestamp_us: Math.round(performance.now() * 1000),
      position: pose.position,
      rotation: pose.rotation,
    });
  }

  private sendRotate(degrees: number) {
    if (this.session.state !== "STREAMING" || this.meshId === null) return;
    const q = axisAngle([0, 1, 0], (degrees * Math.PI) / 180);
    this.send("object_control", {
      id: this.meshId,
      op: "set_transform",
      value: [0, 0, 0, q[0], q[1], q[2], q[3], this.currentScale, this.currentScale, this.currentScale],
    });
    this.currentRotation = degrees;
  }

  private currentRotation = 0;
  private currentScale = 1;

  private sendScale(scale: number) {
    if (this.session.state !== "STREAMING" || this.meshId === null) return;
    const q = axisAngle([0, 1, 0], (this.currentRotation * Math.PI) / 180);
    this.send("object_control", {
      id: this.meshId,
      op: "set_transform",
      value: [0, 0, 0, q[0], q[1], q[2], q[3], scale, scale, scale],
    });
    this.currentScale = scale;
  }

  private scheduleOverlay() {
    if (this.overlayTimer !== null) {
      clearInterval(this.overlayTimer);
      this.overlayTimer = null;
    }
    if (!this.overlay || this.session.state !== "STREAMING") return;
    this.overlayTimer = setInterval(() => {
      if (this.session.state !== "STREAMING") return;
      const id = this.markerIds.take();
      this.pendingMarkers.set(id, performance.now());
      this.send("marker_request", { marker_id: id });
      const cutoff = performance.now() - 1000;
      for (const [mid, t] of this.pendingMarkers) {
        if (t < cutoff) this.pendingMarkers.delete(mid);
      }
    }, 500) as unknown as number;
  }

  private updateHud() {
    const mean = this.m2p.mean();
    const p95 = this.m2p.p95();
    const parts = [
      `frames ${this.frames}`,
      `fps ${this.fpsWindow.length}`,
      `bitrate ${(this.bitrate.bps() / 1000).toFixed(0)} kbps`,
    ];
    if (this.overlay && mean !== null && p95 !== null) {
      parts.push(`m2p ${mean.toFixed(1)} ms (p95 ${p95.toFixed(1)})`);
    }
    this.hud.textContent = parts.join("  |  ");
  }
}

new ViewerApp();
