/** Memory-token curve from a sweep summary: per-seed EM scatter, mean line
 * with a +-std band, and the halt-vs-T line on a second panel. */

import { SweepRow } from "../schema.js";
import { Figure, PALETTE } from "../svg.js";

export function renderMemoryCurve(rows: SweepRow[]): string {
  if (rows.length === 0) throw new Error("no sweep rows to plot");
  const sorted = [...rows].sort((a, b) => a.mem_tokens - b.mem_tokens);
  const ts = sorted.map((r) => r.mem_tokens);
  const xMax = Math.max(...ts, 1);
  const fig = new Figure(980, 380);

  const em = fig.addPanel({ xDomain: [0, xMax * 1.05], yDomain: [0, 1] }, 0, 2);
  sorted.forEach((row) => {
    row.emPerSeed.forEach((v, si) => {
      if (v !== null) em.circles([row.mem_tokens], [v], PALETTE[si % PALETTE.length], 3, 0.8);
    });
  });
  const withMean = sorted.filter((r) => r.emMean !== null);
  em.polyline(withMean.map((r) => r.mem_tokens),
              withMean.map((r) => r.emMean as number), "#111827", 2.5, 1.0, "mean");
  withMean.forEach((r) => {
    if (r.emStd !== null) {
      const lo = (r.emMean as number) - r.emStd;
      const hi = (r.emMean as number) + r.emStd;
      em.polyline([r.mem_tokens, r.mem_tokens], [lo, hi], "#111827", 1.0, 0.7, "band");
    }
  });
  em.axes("memory tokens", "eval exact match", "Accuracy vs memory size");

  const haltRows = sorted.filter((r) => r.haltMean !== null);
  const haltMax = Math.max(...haltRows.map((r) => r.haltMean as number), 1);
  const halt = fig.addPanel({ xDomain: [0, xMax * 1.05],
                              yDomain: [0, haltMax * 1.15] }, 1, 2);
  halt.polyline(haltRows.map((r) => r.mem_tokens),
                haltRows.map((r) => r.haltMean as number), PALETTE[0], 2.5);
  halt.circles(haltRows.map((r) => r.mem_tokens),
               haltRows.map((r) => r.haltMean as number), PALETTE[0], 3, 0.9);
  halt.axes("memory tokens", "mean halt steps", "Depth vs memory size");
  return fig.render();
}
