import { mkdtempSync, readdirSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { beforeAll, describe, expect, it } from "vitest";

import { main } from "../src/cli.js";
import { attentionSteps, parseMetricsJsonl, parseSweepCsv, readContainer }
  from "../src/parse.js";
import { batchAverage, seqToMemFraction } from "../src/plots/attention.js";
import { rollingMean } from "../src/svg.js";
import { attentionFixture, buildContainer, extendedCsv, metricsJsonl,
         perStepJsonl, sweepCsv } from "./fixtures.js";

let dir: string;

beforeAll(() => {
  dir = mkdtempSync(join(tmpdir(), "plotkit-"));
});

function countMatches(text: string, re: RegExp): number {
  return (text.match(re) ?? []).length;
}

describe("parsers", () => {
  it("reads well-formed metrics and rejects missing fields", () => {
    const recs = parseMetricsJsonl(metricsJsonl(6));
    expect(recs).toHaveLength(6);
    expect(() => parseMetricsJsonl('{"step": 1}\n'))
      .toThrow(/missing numeric field/);
  });

  it("reads sweep summaries with absent std as null", () => {
    const rows = parseSweepCsv(sweepCsv());
    expect(rows).toHaveLength(3);
    expect(rows[0].emStd).toBeCloseTo(0.005);
  });

  it("round-trips the binary container", () => {
    const path = join(dir, "roundtrip.ckpt");
    writeFileSync(path, buildContainer(
      [{ name: "attn.step3", shape: [1, 2, 4, 4], values: Array(32).fill(1 / 4) }],
      { mem_tokens: 2 }));
    const c = readContainer(path);
    expect(c.meta.mem_tokens).toBe(2);
    const steps = attentionSteps(c);
    expect([...steps.keys()]).toEqual([3]);
    expect(steps.get(3)!.data[0]).toBeCloseTo(0.25);
  });
});

describe("trajectories figure", () => {
  it("renders one series per run with warmup shading", () => {
    const runA = join(dir, "runA.jsonl");
    const runB = join(dir, "runB.jsonl");
    const runC = join(dir, "runC.jsonl");
    writeFileSync(runA, metricsJsonl(8, 0));
    writeFileSync(runB, metricsJsonl(8, 2));
    writeFileSync(runC, metricsJsonl(8, 4));
    const out = join(dir, "traj.svg");
    const rc = main(["trajectories", "--out", out, "--warmup", "200x128",
                     runA, runB, runC]);
    expect(rc).toBe(0);
    const svg = readFileSync(out, "utf-8");
    // two panels x three runs: thick rolling-mean polylines
    expect(countMatches(svg, /class="series"/g)).toBe(6);
    // warmup shading appears on both panels
    expect(countMatches(svg, /class="shade"/g)).toBe(2);
    expect(svg).toContain("runA");
  });

  it("rolling mean of a constant series is the series", () => {
    expect(rollingMean([2, 2, 2, 2], 5)).toEqual([2, 2, 2, 2]);
  });

  it("fails on an empty input set", () => {
    expect(main(["trajectories", "--out", join(dir, "x.svg")])).toBe(1);
  });
});

describe("memory-curve figure", () => {
  it("renders per-seed points and a mean line", () => {
    const csv = join(dir, "summary.csv");
    writeFileSync(csv, sweepCsv());
    const out = join(dir, "curve.svg");
    expect(main(["memory-curve", "--out", out, csv])).toBe(0);
    const svg = readFileSync(out, "utf-8");
    expect(countMatches(svg, /class="mean"/g)).toBe(1);
    // 3 + 2 + 3 per-seed EM circles
    expect(countMatches(svg, /<circle/g)).toBeGreaterThanOrEqual(8);
  });
});

describe("extended-inference figure", () => {
  it("renders one polyline per CSV and marks the trained depth", () => {
    const a = join(dir, "extA.csv");
    const b = join(dir, "extB.csv");
    writeFileSync(a, extendedCsv(16, 8));
    writeFileSync(b, extendedCsv(16, 8));
    const out = join(dir, "ext.svg");
    expect(main(["extended", "--out", out, "--k-train", "8", a, b])).toBe(0);
    const svg = readFileSync(out, "utf-8");
    expect(countMatches(svg, /class="series"/g)).toBe(2);
    expect(countMatches(svg, /class="trained-depth"/g)).toBe(1);
    expect(countMatches(svg, /class="sweetspot"/g)).toBe(1);
  });
});

describe("attention figures", () => {
  const T = 2;
  const S = 6;
  const HEADS = 4;

  it("writes one SVG per captured step with quadrant lines at index T", () => {
    const dump = join(dir, "attn.ckpt");
    const fx = attentionFixture(2, HEADS, S);
    writeFileSync(dump, buildContainer([
      fx,
      { ...fx, name: "attn.step5" },
    ], { mem_tokens: T }));
    const outDir = join(dir, "attn");
    expect(main(["attention", "--out-dir", outDir, dump])).toBe(0);
    const files = readdirSync(outDir).sort();
    expect(files).toEqual(["attention_step0.svg", "attention_step5.svg"]);
    const svg = readFileSync(join(outDir, "attention_step0.svg"), "utf-8");
    // head-averaged panel + one panel per head, two red lines each
    expect(countMatches(svg, /class="quadrant"/g)).toBe(2 * (HEADS + 1));
    expect(svg).toContain("s→m");
    // the boundary sits at T cells: big panel is 220px wide, T/S of the way
    const off = 26 + (220 * T) / S;
    expect(svg).toContain(`x1="${off.toFixed(2)}"`);
  });

  it("omits quadrant lines when there are no memory rows", () => {
    const dump = join(dir, "attn0.ckpt");
    writeFileSync(dump, buildContainer([attentionFixture(1, 2, 5)],
                                       { mem_tokens: 0 }));
    const outDir = join(dir, "attn0");
    expect(main(["attention", "--out-dir", outDir, dump])).toBe(0);
    const svg = readFileSync(join(outDir, "attention_step0.svg"), "utf-8");
    expect(countMatches(svg, /class="quadrant"/g)).toBe(0);
  });

  it("sequence-to-memory fraction matches a hand computation", () => {
    const s = 4;
    const t = 1;
    // rows: each query row sums to 1; sequence rows put 0.4 on the memory col
    const map = new Float64Array([
      0.25, 0.25, 0.25, 0.25,
      0.4, 0.2, 0.2, 0.2,
      0.4, 0.2, 0.2, 0.2,
      0.4, 0.2, 0.2, 0.2,
    ]);
    expect(seqToMemFraction(map, s, t)).toBeCloseTo(0.4);
  });

  it("batch-averaging preserves row normalization", () => {
    const fx = attentionFixture(3, 2, 5);
    const path = join(dir, "norm.ckpt");
    writeFileSync(path, buildContainer([fx], {}));
    const hm = batchAverage(readContainer(path).arrays.get("attn.step0")!);
    for (const m of hm.maps) {
      for (let q = 0; q < 5; q++) {
        let acc = 0;
        for (let k = 0; k < 5; k++) acc += m[q * 5 + k];
        expect(acc).toBeCloseTo(1, 5);
      }
    }
  });
});

describe("puzzle strip", () => {
  it("renders one grid per step with given outlines", () => {
    const jsonl = join(dir, "steps.jsonl");
    writeFileSync(jsonl, perStepJsonl(4, 2));
    const out = join(dir, "puzzle.svg");
    const solution = "1234341221434321";
    const givens = "1030040020104001";
    expect(main(["puzzle", "--out", out, "--solution", solution,
                 "--givens", givens, "--sample", "1", jsonl])).toBe(0);
    const svg = readFileSync(out, "utf-8");
    expect(countMatches(svg, /class="cell/g)).toBe(4 * 16);
    const nGivens = givens.split("").filter((c) => c !== "0").length;
    expect(countMatches(svg, /class="given"/g)).toBe(4 * nGivens);
    expect(svg).toContain("step 0");
  });
});
