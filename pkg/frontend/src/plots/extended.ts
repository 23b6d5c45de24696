/** Per-step accuracy when running past the trained depth. One series per
 * CSV; a dashed line marks the trained depth and a band marks ~2x. */

import { ExtendedRow } from "../schema.js";
import { Figure, PALETTE } from "../svg.js";

export interface ExtendedSeries {
  label: string;
  rows: ExtendedRow[];
}

export function renderExtended(series: ExtendedSeries[], kTrain: number): string {
  if (series.length === 0) throw new Error("no extended-inference series");
  const kMax = Math.max(...series.flatMap((s) => s.rows.map((r) => r.step))) + 1;
  const fig = new Figure(640, 400);
  const panel = fig.addPanel({ xDomain: [0, kMax], yDomain: [0, 1] });
  panel.shade(2 * kTrain - kTrain * 0.25, Math.min(2 * kTrain + kTrain * 0.25, kMax),
              "#16a34a", 0.15, "sweetspot");
  panel.vline(kTrain - 1, "#6b7280", 1.2, "trained-depth", "4 3");
  series.forEach((s, i) => {
    const rows = [...s.rows].sort((a, b) => a.step - b.step);
    panel.polyline(rows.map((r) => r.step), rows.map((r) => r.em),
                   PALETTE[i % PALETTE.length], 2.2);
  });
  panel.axes("ponder step", "eval exact match", "Inference beyond trained depth");
  panel.legend(series.map((s) => s.label),
               series.map((_, i) => PALETTE[i % PALETTE.length]));
  return fig.render();
}
