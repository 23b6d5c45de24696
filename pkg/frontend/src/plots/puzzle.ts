/** Step-by-step puzzle-solving strip: one grid per ponder step for a chosen
 * sample, cells green where the prediction matches the solution and red
 * where it does not, givens outlined. */

import { PerStepPredictions } from "../schema.js";

export interface PuzzleStripInput {
  steps: PerStepPredictions[];
  solution: number[];
  givens: number[]; // original grid, 0 = blank
  sample: number;
}

export function renderPuzzleStrip(input: PuzzleStripInput): string {
  const { steps, solution, givens, sample } = input;
  if (steps.length === 0) throw new Error("no per-step records");
  const n = Math.round(Math.sqrt(solution.length));
  if (n * n !== solution.length) throw new Error("solution length not square");
  const cell = 18;
  const gridPx = n * cell;
  const pad = 26;
  const width = pad + steps.length * (gridPx + pad);
  const height = gridPx + 2 * pad + 14;
  const parts: string[] = [];

  steps.forEach((rec, si) => {
    const x0 = pad + si * (gridPx + pad);
    const y0 = pad + 6;
    const pred = rec.predictions[sample];
    let correct = 0;
    for (let i = 0; i < solution.length; i++) {
      const r = Math.floor(i / n);
      const c = i % n;
      const ok = pred[i] === solution[i];
      if (ok) correct += 1;
      parts.push(
        `<rect class="cell ${ok ? "ok" : "bad"}" x="${x0 + c * cell}" y="${y0 + r * cell}" ` +
        `width="${cell}" height="${cell}" fill="${ok ? "#bbf7d0" : "#fecaca"}" ` +
        `stroke="#9ca3af" stroke-width="0.4"/>`,
        `<text x="${x0 + c * cell + cell / 2}" y="${y0 + r * cell + cell * 0.7}" ` +
        `font-size="10" text-anchor="middle">${pred[i]}</text>`);
      if (givens[i] !== 0) {
        parts.push(
          `<rect class="given" x="${x0 + c * cell + 1}" y="${y0 + r * cell + 1}" ` +
          `width="${cell - 2}" height="${cell - 2}" fill="none" stroke="#111" stroke-width="1.1"/>`);
      }
    }
    const box = Math.round(Math.sqrt(n));
    for (let b = 0; b <= n; b += box) {
      parts.push(
        `<line x1="${x0 + b * cell}" y1="${y0}" x2="${x0 + b * cell}" y2="${y0 + gridPx}" stroke="#111" stroke-width="0.8"/>`,
        `<line x1="${x0}" y1="${y0 + b * cell}" x2="${x0 + gridPx}" y2="${y0 + b * cell}" stroke="#111" stroke-width="0.8"/>`);
    }
    const solved = correct === solution.length;
    parts.push(
      `<text x="${x0 + gridPx / 2}" y="${y0 - 7}" font-size="10" text-anchor="middle">` +
      `step ${rec.step}: ${solved ? "SOLVED" : `${correct}/${solution.length}`}</text>`);
  });

  return `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
    `viewBox="0 0 ${width} ${height}" font-family="sans-serif">\n` +
    `<rect width="100%" height="100%" fill="white"/>\n${parts.join("\n")}\n</svg>\n`;
}
