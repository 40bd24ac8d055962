/** Stats HUD: rolling per-stage timings and scene counters.
 *
 * Estimators match the benchmark CLI so numbers line up across tools:
 * median is the lower middle of the sorted window and p99 is nearest-rank.
 */

import { FrameResult } from "./render.js";

export const WINDOW_SIZE = 120;

export class RollingStats {
  private readonly cap: number;
  private readonly ring: number[] = [];
  private next = 0;

  constructor(cap: number = WINDOW_SIZE) {
    if (!Number.isInteger(cap) || cap < 1) throw new RangeError("window capacity must be >= 1");
    this.cap = cap;
  }

  push(sample: number): void {
    if (this.ring.length < this.cap) {
      this.ring.push(sample);
    } else {
      this.ring[this.next] = sample;
    }
    this.next = (this.next + 1) % this.cap;
  }

  get count(): number {
    return this.ring.length;
  }

  median(): number {
    const s = [...this.ring].sort((a, b) => a - b);
    if (s.length === 0) return NaN;
    return s[(s.length - 1) >> 1];
  }

  p99(): number {
    const s = [...this.ring].sort((a, b) => a - b);
    if (s.length === 0) return NaN;
    const rank = Math.max(Math.ceil(0.99 * s.length), 1);
    return s[rank - 1];
  }

  clear(): void {
    this.ring.length = 0;
    this.next = 0;
  }
}

export interface StageWindows {
  total: RollingStats;
  preprocess: RollingStats;
  sort: RollingStats;
  render: RollingStats;
}

export function newStageWindows(cap: number = WINDOW_SIZE): StageWindows {
  return {
    total: new RollingStats(cap),
    preprocess: new RollingStats(cap),
    sort: new RollingStats(cap),
    render: new RollingStats(cap),
  };
}

export function pushFrame(w: StageWindows, frame: FrameResult): void {
  w.total.push(frame.totalMs);
  w.preprocess.push(frame.preprocessMs);
  w.sort.push(frame.sortMs);
  w.render.push(frame.renderMs);
}

export interface HudLine {
  label: string;
  text: string;
  /** 0..1 share of the median frame, for the stage bar widths. */
  share: number;
}

export interface HudModel {
  splatLine: string;
  visibleLine: string;
  memoryLine: string;
  frameLine: string;
  stages: HudLine[];
  /** True when per-stage numbers are wall-clock host totals only. */
  caveat: boolean;
}

function fmtMs(x: number): string {
  return Number.isFinite(x) ? `${x.toFixed(2)} ms` : "--";
}

export function fmtBytes(n: number): string {
  if (n < 1024) return `${n} B`;
  if (n < 1024 * 1024) return `${(n / 1024).toFixed(1)} KiB`;
  return `${(n / (1024 * 1024)).toFixed(1)} MiB`;
}

export function hudModel(w: StageWindows, splatCount: number,
  lastFrame: FrameResult | null, sceneBytes: number): HudModel {
  const medTotal = w.total.median();
  const stages: HudLine[] = [];
  const caveat = lastFrame !== null && !lastFrame.timestampValid;
  if (!caveat) {
    const rows: Array<[string, RollingStats]> = [
      ["preprocess", w.preprocess],
      ["sort", w.sort],
      ["render", w.render],
    ];
    for (const [label, stats] of rows) {
      const med = stats.median();
      stages.push({
        label,
        text: `${label} ${fmtMs(med)} (p99 ${fmtMs(stats.p99())})`,
        share: Number.isFinite(med) && medTotal > 0 ? Math.min(med / medTotal, 1) : 0,
      });
    }
  }
  const vis = lastFrame ? lastFrame.visibleCount : 0;
  const frags = lastFrame ? lastFrame.fragmentsEvaluated : 0;
  return {
    splatLine: `${splatCount} splats`,
    visibleLine: `${vis} visible, ${frags} fragments`,
    memoryLine: `scene ${fmtBytes(sceneBytes)}`,
    frameLine: `frame ${fmtMs(medTotal)} median / ${fmtMs(w.total.p99())} p99` +
      ` (${w.total.count} samples)`,
    stages,
    caveat,
  };
}
