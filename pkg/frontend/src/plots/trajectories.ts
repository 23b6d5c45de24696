/** Two-panel training-trajectory figure: mean halt and eval EM against
 * samples seen, one series per run, faint raw points plus a thick rolling
 * mean, with the lambda-warmup interval shaded. */

import { RunSeries } from "../schema.js";
import { Figure, PALETTE, rollingMean } from "../svg.js";

export interface TrajectoryOptions {
  rollingWindow?: number;       // evals per rolling-mean point (default 5)
  warmup?: Array<{ steps: number; batch: number }>; // shaded intervals
}

export function renderTrajectories(runs: RunSeries[],
                                   opts: TrajectoryOptions = {}): string {
  if (runs.length === 0) throw new Error("no runs to plot");
  const window = opts.rollingWindow ?? 5;
  const fig = new Figure(980, 380);

  const allSamples = runs.flatMap((r) => r.records.map((m) => m.samples_seen));
  const xMax = Math.max(...allSamples, 1);
  const haltMax = Math.max(...runs.flatMap((r) => r.records.map((m) => m.halt_max)), 1);

  const panels = [
    { yDomain: [0, haltMax * 1.05] as [number, number], field: "mean_halt" as const,
      label: "mean halt steps", title: "Halting depth" },
    { yDomain: [0, 1] as [number, number], field: "eval_em" as const,
      label: "eval exact match", title: "Held-out accuracy" },
  ];

  panels.forEach((spec, pi) => {
    const panel = fig.addPanel({ xDomain: [0, xMax], yDomain: spec.yDomain }, pi, 2);
    for (const w of opts.warmup ?? []) {
      panel.shade(0, w.steps * w.batch);
    }
    runs.forEach((run, ri) => {
      const xs = run.records.map((m) => m.samples_seen);
      const ys = run.records.map((m) => m[spec.field]);
      const color = PALETTE[ri % PALETTE.length];
      panel.circles(xs, ys, color, 1.8, 0.35);
      panel.polyline(xs, rollingMean(ys, window), color, 2.5);
    });
    panel.axes("samples seen", spec.label, spec.title);
    if (pi === 0) {
      panel.legend(runs.map((r) => r.label),
                   runs.map((_, i) => PALETTE[i % PALETTE.length]));
    }
  });
  return fig.render();
}
