/** Minimal SVG scene builder: axes, polylines, rects, text. No dependencies;
 * output is a static .svg file per figure. */

export interface Margin {
  top: number;
  right: number;
  bottom: number;
  left: number;
}

const DEF_MARGIN: Margin = { top: 28, right: 16, bottom: 40, left: 52 };

export const PALETTE = [
  "#2563eb", "#dc2626", "#16a34a", "#9333ea", "#ea580c", "#0891b2",
  "#ca8a04", "#db2777",
];

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function fmt(v: number): string {
  if (!Number.isFinite(v)) return "0";
  return Math.abs(v) >= 1e4 || (Math.abs(v) < 1e-3 && v !== 0)
    ? v.toExponential(1)
    : String(Math.round(v * 1e4) / 1e4);
}

export class LinearScale {
  constructor(
    readonly d0: number, readonly d1: number,
    readonly r0: number, readonly r1: number,
  ) {}

  at(v: number): number {
    const span = this.d1 - this.d0 || 1;
    return this.r0 + ((v - this.d0) / span) * (this.r1 - this.r0);
  }

  ticks(n = 5): number[] {
    const out: number[] = [];
    for (let i = 0; i <= n; i++) out.push(this.d0 + ((this.d1 - this.d0) * i) / n);
    return out;
  }
}

export class Panel {
  readonly parts: string[] = [];

  constructor(
    readonly x: LinearScale, readonly y: LinearScale,
    readonly margin: Margin,
  ) {}

  polyline(xs: number[], ys: number[], stroke: string, width = 1.5,
           opacity = 1.0, cls = "series"): void {
    const pts = xs.map((v, i) => `${this.x.at(v).toFixed(2)},${this.y.at(ys[i]).toFixed(2)}`);
    this.parts.push(
      `<polyline class="${cls}" fill="none" stroke="${stroke}" ` +
      `stroke-width="${width}" opacity="${opacity}" points="${pts.join(" ")}"/>`);
  }

  circles(xs: number[], ys: number[], fill: string, r = 2, opacity = 0.5): void {
    for (let i = 0; i < xs.length; i++) {
      this.parts.push(
        `<circle cx="${this.x.at(xs[i]).toFixed(2)}" cy="${this.y.at(ys[i]).toFixed(2)}" ` +
        `r="${r}" fill="${fill}" opacity="${opacity}"/>`);
    }
  }

  shade(x0: number, x1: number, fill = "#9ca3af", opacity = 0.25,
        cls = "shade"): void {
    const a = this.x.at(x0);
    const b = this.x.at(x1);
    const top = Math.min(this.y.r0, this.y.r1);
    const h = Math.abs(this.y.r1 - this.y.r0);
    this.parts.push(
      `<rect class="${cls}" x="${Math.min(a, b).toFixed(2)}" y="${top}" ` +
      `width="${Math.abs(b - a).toFixed(2)}" height="${h}" fill="${fill}" opacity="${opacity}"/>`);
  }

  vline(xv: number, stroke = "#dc2626", width = 1.5, cls = "vline",
        dash = ""): void {
    const xp = this.x.at(xv).toFixed(2);
    const d = dash ? ` stroke-dasharray="${dash}"` : "";
    this.parts.push(
      `<line class="${cls}" x1="${xp}" y1="${Math.min(this.y.r0, this.y.r1)}" ` +
      `x2="${xp}" y2="${Math.max(this.y.r0, this.y.r1)}" stroke="${stroke}" ` +
      `stroke-width="${width}"${d}/>`);
  }

  hline(yv: number, stroke = "#dc2626", width = 1.5, cls = "hline"): void {
    const yp = this.y.at(yv).toFixed(2);
    this.parts.push(
      `<line class="${cls}" x1="${Math.min(this.x.r0, this.x.r1)}" y1="${yp}" ` +
      `x2="${Math.max(this.x.r0, this.x.r1)}" y2="${yp}" stroke="${stroke}" ` +
      `stroke-width="${width}"/>`);
  }

  axes(xLabel: string, yLabel: string, title = ""): void {
    const x0 = Math.min(this.x.r0, this.x.r1);
    const x1 = Math.max(this.x.r0, this.x.r1);
    const yBottom = Math.max(this.y.r0, this.y.r1);
    const yTop = Math.min(this.y.r0, this.y.r1);
    this.parts.push(
      `<line x1="${x0}" y1="${yBottom}" x2="${x1}" y2="${yBottom}" stroke="#111" stroke-width="1"/>`,
      `<line x1="${x0}" y1="${yTop}" x2="${x0}" y2="${yBottom}" stroke="#111" stroke-width="1"/>`);
    for (const t of this.x.ticks()) {
      const xp = this.x.at(t).toFixed(2);
      this.parts.push(
        `<line x1="${xp}" y1="${yBottom}" x2="${xp}" y2="${yBottom + 4}" stroke="#111"/>`,
        `<text x="${xp}" y="${yBottom + 16}" font-size="10" text-anchor="middle">${esc(fmt(t))}</text>`);
    }
    for (const t of this.y.ticks()) {
      const yp = this.y.at(t).toFixed(2);
      this.parts.push(
        `<line x1="${x0 - 4}" y1="${yp}" x2="${x0}" y2="${yp}" stroke="#111"/>`,
        `<text x="${x0 - 6}" y="${Number(yp) + 3}" font-size="10" text-anchor="end">${esc(fmt(t))}</text>`);
    }
    const cx = (x0 + x1) / 2;
    this.parts.push(
      `<text x="${cx}" y="${yBottom + 32}" font-size="11" text-anchor="middle">${esc(xLabel)}</text>`,
      `<text transform="rotate(-90 ${x0 - 38} ${(yTop + yBottom) / 2})" x="${x0 - 38}" ` +
      `y="${(yTop + yBottom) / 2}" font-size="11" text-anchor="middle">${esc(yLabel)}</text>`);
    if (title) {
      this.parts.push(
        `<text x="${cx}" y="${yTop - 8}" font-size="12" font-weight="bold" text-anchor="middle">${esc(title)}</text>`);
    }
  }

  legend(labels: string[], colors: string[]): void {
    const x0 = Math.min(this.x.r0, this.x.r1) + 8;
    let y = Math.min(this.y.r0, this.y.r1) + 12;
    labels.forEach((label, i) => {
      this.parts.push(
        `<line class="legend" x1="${x0}" y1="${y - 3}" x2="${x0 + 18}" y2="${y - 3}" ` +
        `stroke="${colors[i % colors.length]}" stroke-width="2.5"/>`,
        `<text x="${x0 + 24}" y="${y}" font-size="10">${esc(label)}</text>`);
      y += 14;
    });
  }
}

export interface PanelSpec {
  xDomain: [number, number];
  yDomain: [number, number];
}

/** A figure of one or more horizontally stacked panels. */
export class Figure {
  readonly panels: Panel[] = [];
  private extra: string[] = [];

  constructor(
    readonly width = 560, readonly height = 360,
    readonly margin: Margin = DEF_MARGIN,
  ) {}

  addPanel(spec: PanelSpec, index = this.panels.length, total = 1): Panel {
    const innerW = (this.width - this.margin.left - this.margin.right -
      (total - 1) * 24) / total;
    const left = this.margin.left + index * (innerW + 24);
    const x = new LinearScale(spec.xDomain[0], spec.xDomain[1], left, left + innerW);
    const y = new LinearScale(spec.yDomain[0], spec.yDomain[1],
      this.height - this.margin.bottom, this.margin.top);
    const p = new Panel(x, y, this.margin);
    this.panels.push(p);
    return p;
  }

  raw(svg: string): void {
    this.extra.push(svg);
  }

  render(): string {
    const body = this.panels.flatMap((p) => p.parts).concat(this.extra).join("\n");
    return `<svg xmlns="http://www.w3.org/2000/svg" width="${this.width}" ` +
      `height="${this.height}" viewBox="0 0 ${this.width} ${this.height}" ` +
      `font-family="sans-serif">\n<rect width="100%" height="100%" fill="white"/>\n` +
      body + "\n</svg>\n";
  }
}

export function rollingMean(values: number[], window: number): number[] {
  if (window <= 1) return values.slice();
  const out: number[] = [];
  for (let i = 0; i < values.length; i++) {
    const s = Math.max(0, i - window + 1);
    let acc = 0;
    for (let j = s; j <= i; j++) acc += values[j];
    out.push(acc / (i - s + 1));
  }
  return out;
}
