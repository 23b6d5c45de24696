/** Attention heatmaps from a binary dump: a head-averaged map per captured
 * step plus a per-head grid, with red lines delineating the memory/sequence
 * quadrant boundary at row/column T. Each per-head panel is annotated with
 * its sequence->memory mass fraction. */

import { ContainerArray } from "../parse.js";

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

/** Map a normalized value to a white->blue ramp. */
function heat(v: number): string {
  const t = Math.max(0, Math.min(1, v));
  const r = Math.round(255 - 215 * t);
  const g = Math.round(255 - 190 * t);
  const b = 255;
  return `rgb(${r},${g},${b})`;
}

export interface HeadMaps {
  heads: number;
  size: number;
  /** maps[h][q*size + k]: batch-averaged attention, rows normalized. */
  maps: Float64Array[];
}

/** Average attention over the batch axis: [B, heads, S, S] -> per-head maps. */
export function batchAverage(arr: ContainerArray): HeadMaps {
  const [b, heads, s, s2] = arr.shape;
  if (arr.shape.length !== 4 || s !== s2) {
    throw new Error(`attention array must be [B, heads, S, S], got ${arr.shape}`);
  }
  const maps: Float64Array[] = [];
  for (let h = 0; h < heads; h++) {
    const m = new Float64Array(s * s);
    for (let bi = 0; bi < b; bi++) {
      const base = ((bi * heads + h) * s) * s;
      for (let i = 0; i < s * s; i++) m[i] += arr.data[base + i];
    }
    for (let i = 0; i < s * s; i++) m[i] /= b;
    maps.push(m);
  }
  return { heads, size: s, maps };
}

export function headAverage(hm: HeadMaps): Float64Array {
  const out = new Float64Array(hm.size * hm.size);
  for (const m of hm.maps) for (let i = 0; i < out.length; i++) out[i] += m[i];
  for (let i = 0; i < out.length; i++) out[i] /= hm.heads;
  return out;
}

export function seqToMemFraction(map: Float64Array, size: number, t: number): number {
  if (t === 0) return 0;
  let acc = 0;
  let rows = 0;
  for (let q = t; q < size; q++) {
    for (let k = 0; k < t; k++) acc += map[q * size + k];
    rows += 1;
  }
  return rows ? acc / rows : 0;
}

function drawMap(map: Float64Array, size: number, t: number, x0: number,
                 y0: number, px: number, label: string): string {
  const parts: string[] = [];
  let vmax = 0;
  for (const v of map) vmax = Math.max(vmax, v);
  const cell = px / size;
  for (let q = 0; q < size; q++) {
    for (let k = 0; k < size; k++) {
      const v = vmax > 0 ? map[q * size + k] / vmax : 0;
      parts.push(
        `<rect x="${(x0 + k * cell).toFixed(2)}" y="${(y0 + q * cell).toFixed(2)}" ` +
        `width="${cell.toFixed(2)}" height="${cell.toFixed(2)}" fill="${heat(v)}"/>`);
    }
  }
  parts.push(`<rect class="map-frame" x="${x0}" y="${y0}" width="${px}" height="${px}" ` +
    `fill="none" stroke="#111" stroke-width="0.8"/>`);
  if (t > 0 && t < size) {
    const off = t * cell;
    parts.push(
      `<line class="quadrant" x1="${(x0 + off).toFixed(2)}" y1="${y0}" ` +
      `x2="${(x0 + off).toFixed(2)}" y2="${y0 + px}" stroke="#dc2626" stroke-width="1.4"/>`,
      `<line class="quadrant" x1="${x0}" y1="${(y0 + off).toFixed(2)}" ` +
      `x2="${x0 + px}" y2="${(y0 + off).toFixed(2)}" stroke="#dc2626" stroke-width="1.4"/>`);
  }
  parts.push(`<text x="${x0 + px / 2}" y="${y0 - 5}" font-size="10" ` +
    `text-anchor="middle">${esc(label)}</text>`);
  return parts.join("\n");
}

/** One SVG per step: head-averaged map on the left, per-head grid on the right. */
export function renderAttentionStep(hm: HeadMaps, t: number, step: number): string {
  const pad = 26;
  const bigPx = 220;
  const cols = Math.ceil(Math.sqrt(hm.heads));
  const rows = Math.ceil(hm.heads / cols);
  const smallPx = 96;
  const gridW = cols * (smallPx + pad);
  const width = pad + bigPx + pad * 2 + gridW + pad;
  const height = Math.max(bigPx, rows * (smallPx + pad)) + 2 * pad + 10;
  const parts: string[] = [];
  parts.push(drawMap(headAverage(hm), hm.size, t, pad, pad + 10, bigPx,
                     `step ${step} (head-averaged)`));
  hm.maps.forEach((m, h) => {
    const cx = pad + bigPx + 2 * pad + (h % cols) * (smallPx + pad);
    const cy = pad + 10 + Math.floor(h / cols) * (smallPx + pad);
    const frac = seqToMemFraction(m, hm.size, t);
    parts.push(drawMap(m, hm.size, t, cx, cy, smallPx,
                       `H${h} s→m ${frac.toFixed(2)}`));
  });
  return `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
    `viewBox="0 0 ${width} ${height}" font-family="sans-serif">\n` +
    `<rect width="100%" height="100%" fill="white"/>\n${parts.join("\n")}\n</svg>\n`;
}
