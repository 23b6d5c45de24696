/** Fixture builders mirroring the run-output schemas: metrics JSONL lines,
 * sweep/extended CSV text, per-step prediction JSONL, and the binary
 * array container (magic PGRIDCK1 + uint64 header length + JSON header). */

import { MetricsRecord } from "../src/schema.js";

export function metricsLine(step: number, over: Partial<MetricsRecord> = {}): string {
  const rec: MetricsRecord = {
    step,
    samples_seen: step * 128,
    lr: 1e-3 * (1 - step / 1000),
    lambda_t: 0,
    train_loss: Math.exp(-step / 300),
    eval_em: Math.min(0.95, step / 1000),
    mean_halt: 8 - step / 500,
    halt_min: 6,
    halt_max: 8,
    router_grad_norm: 0.01,
    ...over,
  };
  return JSON.stringify(rec);
}

export function metricsJsonl(nEvals: number, seed = 0): string {
  const lines: string[] = [];
  for (let i = 1; i <= nEvals; i++) {
    lines.push(metricsLine(i * 100, { eval_em: Math.min(0.9, (i + seed) / nEvals * 0.8) }));
  }
  return lines.join("\n") + "\n";
}

export function sweepCsv(): string {
  return [
    "config,mem_tokens,seeds,em_per_seed,em_mean,em_std,halt_mean,halt_range,token_steps,failed_cells",
    "mem_tokens=0,0,0;1;2,0.0200;0.0300;0.0250,0.0250,0.0050,7.83,6.90-8.50,759,",
    "mem_tokens=4,4,0;1;2,0.5500;0.5600,0.5550,0.0071,7.00,7.00-8.00,595,T4_s2",
    "mem_tokens=8,8,0;1;2,0.9100;0.9300;0.9200,0.9200,0.0100,6.50,6.00-7.00,546,",
  ].join("\n") + "\n";
}

export function extendedCsv(kRun: number, kTrain: number): string {
  const lines = ["step,em,step_emb_index,router_p_mean"];
  for (let k = 0; k < kRun; k++) {
    const em = Math.min(0.9, 0.3 + 0.05 * k - 0.01 * Math.max(0, k - 2 * kTrain));
    lines.push(`${k},${em.toFixed(6)},${k % kTrain},0.050000`);
  }
  return lines.join("\n") + "\n";
}

export function perStepJsonl(nSteps: number, nSamples: number, cells = 16): string {
  const lines: string[] = [];
  for (let k = 0; k < nSteps; k++) {
    const predictions: number[][] = [];
    const correct: number[] = [];
    for (let s = 0; s < nSamples; s++) {
      const grid = Array.from({ length: cells }, (_, i) => ((i + k + s) % 4) + 1);
      predictions.push(grid);
      correct.push(Math.min(cells, 4 + 3 * k));
    }
    lines.push(JSON.stringify({
      kind: "per_step_predictions", step: k,
      em: k === nSteps - 1 ? 1 : 0,
      correct_counts: correct, predictions,
    }));
  }
  return lines.join("\n") + "\n";
}

export interface FixtureArray {
  name: string;
  shape: number[];
  values: number[]; // row-major
}

/** Assemble a PGRIDCK1 container with float64 payloads. */
export function buildContainer(arrays: FixtureArray[],
                               meta: Record<string, unknown> = {}): Buffer {
  const entries: object[] = [];
  const blobs: Buffer[] = [];
  let offset = 0;
  for (const arr of arrays) {
    const nbytes = arr.values.length * 8;
    const blob = Buffer.alloc(nbytes);
    arr.values.forEach((v, i) => blob.writeDoubleLE(v, i * 8));
    entries.push({ name: arr.name, dtype: "<f8", shape: arr.shape, offset });
    blobs.push(blob);
    offset += nbytes;
  }
  const header = Buffer.from(JSON.stringify({ version: 1, meta, arrays: entries }), "utf-8");
  const head = Buffer.alloc(16);
  head.write("PGRIDCK1", 0, "latin1");
  head.writeBigUInt64LE(BigInt(header.length), 8);
  return Buffer.concat([head, header, ...blobs]);
}

/** Row-normalized random attention [B, heads, S, S]. */
export function attentionFixture(b: number, heads: number, s: number): FixtureArray {
  const values: number[] = [];
  let state = 12345;
  const rand = () => {
    state = (state * 1103515245 + 12345) % 2147483648;
    return state / 2147483648;
  };
  for (let bi = 0; bi < b; bi++) {
    for (let h = 0; h < heads; h++) {
      for (let q = 0; q < s; q++) {
        const row = Array.from({ length: s }, () => rand() + 0.01);
        const sum = row.reduce((a, v) => a + v, 0);
        values.push(...row.map((v) => v / sum));
      }
    }
  }
  return { name: "attn.step0", shape: [b, heads, s, s], values };
}
