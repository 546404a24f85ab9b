/** Rolling measurement windows for the HUD readouts. */

export class RollingStats {
  private values: number[] = [];

  constructor(readonly capacity = 50) {}

  push(v: number): void {
    this.values.push(v);
    if (this.values.length > this.capacity) this.values.shift();
  }

  get count(): number {
    return this.values.length;
  }

  mean(): number | null {
    if (!this.values.length) return null;
    return this.values.reduce((a, b) => a + b, 0) / this.values.length;
  }

  p95(): number | null {
    if (!this.values.length) return null;
    const sorted = [...this.values].sort((a, b) => a - b);
    const idx = 0.95 * (sorted.length - 1);
    const lo = Math.floor(idx), hi = Math.ceil(idx);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * (idx - lo);
  }
}

/** Bytes over a sliding one-second window. */
export class BitrateMeter {
  private samples: Array<[number, number]> = [];

  add(bytes: number, tMs: number): void {
    this.samples.push([tMs, bytes]);
    const cutoff = tMs - 1000;
    while (this.samples.length && this.samples[0][0] < cutoff) this.samples.shift();
  }

  bps(): number {
    return 8 * this.samples.reduce((a, [, b]) => a + b, 0);
  }
}
