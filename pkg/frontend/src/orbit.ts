/** Orbit camera: azimuth/elevation/radius around the scene center.
 *
 * Quaternions are (x, y, z, w), matching the wire. The camera always faces
 * the center: orientation = yaw(azimuth) * pitch(-elevation).
 */

export type Quat = [number, number, number, number];
export type Vec3 = [number, number, number];

export function mulQuat(a: Quat, b: Quat): Quat {
  const [ax, ay, az, aw] = a;
  const [bx, by, bz, bw] = b;
  return [
    aw * bx + ax * bw + ay * bz - az * by,
    aw * by - ax * bz + ay * bw + az * bx,
    aw * bz + ax * by - ay * bx + az * bw,
    aw * bw - ax * bx - ay * by - az * bz,
  ];
}

export function normalizeQuat(q: Quat): Quat {
  const n = Math.hypot(q[0], q[1], q[2], q[3]);
  return [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
}

export function axisAngle(axis: Vec3, angle: number): Quat {
  const n = Math.hypot(axis[0], axis[1], axis[2]);
  const s = Math.sin(angle / 2) / n;
  return [axis[0] * s, axis[1] * s, axis[2] * s, Math.cos(angle / 2)];
}

export function quatAngleDeg(a: Quat, b: Quat): number {
  const dot = Math.abs(a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]);
  return (2 * Math.acos(Math.min(dot, 1)) * 180) / Math.PI;
}

export interface Pose {
  position: Vec3;
  rotation: Quat;
}

const ELEVATION_LIMIT = Math.PI / 2 - 0.05;

export class OrbitCamera {
  azimuth = 0; // radians around +y
  elevation = 0; // radians above the horizon
  radius: number;

  constructor(radius = 3.0, readonly center: Vec3 = [0, 0, 0]) {
    this.radius = radius;
  }

  /** Pointer drag in pixels; a full canvas width sweeps one revolution. */
  drag(dxPixels: number, dyPixels: number, canvasWidth = 640): void {
    this.azimuth += (dxPixels / canvasWidth) * 2 * Math.PI;
    this.elevation += (dyPixels / canvasWidth) * Math.PI;
    this.elevation = Math.max(-ELEVATION_LIMIT, Math.min(ELEVATION_LIMIT, this.elevation));
  }

  zoom(factor: number): void {
    this.radius = Math.max(0.5, Math.min(50, this.radius * factor));
  }

  pose(): Pose {
    const ca = Math.cos(this.azimuth), sa = Math.sin(this.azimuth);
    const ce = Math.cos(this.elevation), se = Math.sin(this.elevation);
    const position: Vec3 = [
      this.center[0] + this.radius * ce * sa,
      this.center[1] + this.radius * se,
      this.center[2] + this.radius * ce * ca,
    ];
    const yaw = axisAngle([0, 1, 0], this.azimuth);
    const pitch = axisAngle([1, 0, 0], -this.elevation);
    return { position, rotation: normalizeQuat(mulQuat(yaw, pitch)) };
  }
}

/** Rate limiter for pose updates: at most one send per interval. */
export class PoseThrottle {
  private lastSent = -Infinity;

  constructor(readonly intervalMs = 1000 / 60, private readonly now: () => number = () => performance.now()) {}

  ready(): boolean {
    const t = this.now();
    if (t - this.lastSent < this.intervalMs) return false;
    this.lastSent = t;
    return true;
  }
}
