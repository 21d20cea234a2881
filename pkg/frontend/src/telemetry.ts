/** Rolling series for the telemetry charts and the episode outcome tally. */

import type { MetricsMessage, StateMessage, Status } from "./protocol.js";

export class RingSeries {
  private values: number[] = [];

  constructor(readonly capacity = 600) {}

  push(v: number): void {
    this.values.push(v);
    if (this.values.length > this.capacity) this.values.shift();
  }

  get length(): number {
    return this.values.length;
  }

  snapshot(): number[] {
    return [...this.values];
  }

  range(): [number, number] {
    if (!this.values.length) return [0, 1];
    let lo = Infinity, hi = -Infinity;
    for (const v of this.values) {
      lo = Math.min(lo, v);
      hi = Math.max(hi, v);
    }
    if (lo === hi) {
      lo -= 0.5;
      hi += 0.5;
    }
    return [lo, hi];
  }
}

export class TelemetryStore {
  readonly series: Record<string, RingSeries> = {
    j_q1: new RingSeries(),
    j_q2: new RingSeries(),
    j_pi: new RingSeries(),
    j_ae: new RingSeries(),
    alpha: new RingSeries(),
    psr_so_far: new RingSeries(),
    rl_size: new RingSeries(),
    human_size: new RingSeries(),
    regions: new RingSeries(),
  };
  readonly outcomes: Record<Status, number> = {
    arrived: 0,
    collision: 0,
    timeout: 0,
    oob: 0,
  };
  metricsSeen = 0;

  onMetrics(msg: MetricsMessage): void {
    this.metricsSeen += 1;
    for (const key of ["j_q1", "j_q2", "j_pi", "j_ae"] as const) {
      const v = msg.losses[key];
      if (typeof v === "number" && isFinite(v)) this.series[key].push(v);
    }
    if (isFinite(msg.alpha)) this.series.alpha.push(msg.alpha);
    this.series.psr_so_far.push(msg.psr_so_far);
  }

  onState(msg: StateMessage): void {
    this.series.rl_size.push(msg.buffer_sizes.rl);
    this.series.human_size.push(msg.buffer_sizes.human);
    this.series.regions.push(msg.buffer_sizes.regions);
    if (msg.status) this.outcomes[msg.status] += 1;
  }

  totalOutcomes(): number {
    return Object.values(this.outcomes).reduce((a, b) => a + b, 0);
  }
}
