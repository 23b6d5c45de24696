/** Parsers for the run-directory formats: JSONL, the two CSV layouts, and
 * the binary array container used for attention dumps. */

import { readFileSync } from "node:fs";
import { basename } from "node:path";

import {
  ExtendedRow, MetricsRecord, METRICS_FIELDS, PerStepPredictions, RunSeries,
  SweepRow,
} from "./schema.js";

export class ParseError extends Error {}

export function parseMetricsJsonl(text: string, source = "metrics.jsonl"): MetricsRecord[] {
  const records: MetricsRecord[] = [];
  const lines = text.split("\n").filter((l) => l.trim().length > 0);
  lines.forEach((line, i) => {
    let obj: Record<string, unknown>;
    try {
      obj = JSON.parse(line);
    } catch {
      throw new ParseError(`${source}:${i + 1}: not valid JSON`);
    }
    for (const field of METRICS_FIELDS) {
      if (typeof obj[field] !== "number") {
        throw new ParseError(`${source}:${i + 1}: missing numeric field "${field}"`);
      }
    }
    records.push(obj as unknown as MetricsRecord);
  });
  return records;
}

export function loadRun(path: string, label?: string): RunSeries {
  const text = readFileSync(path, "utf-8");
  return { label: label ?? basename(path), records: parseMetricsJsonl(text, path) };
}

function splitCsvLine(line: string): string[] {
  return line.split(",").map((c) => c.trim());
}

export function parseSweepCsv(text: string, source = "summary.csv"): SweepRow[] {
  const lines = text.split("\n").filter((l) => l.trim().length > 0);
  if (lines.length === 0) throw new ParseError(`${source}: empty`);
  const header = splitCsvLine(lines[0]);
  const col = (name: string) => {
    const i = header.indexOf(name);
    if (i < 0) throw new ParseError(`${source}: missing column "${name}"`);
    return i;
  };
  const iCfg = header.indexOf("config");
  const iT = col("mem_tokens");
  const iSeeds = col("seeds");
  const iEms = col("em_per_seed");
  const iMean = col("em_mean");
  const iStd = col("em_std");
  const iHalt = col("halt_mean");
  const iRange = col("halt_range");
  const iSteps = col("token_steps");
  const num = (s: string) => (s === "" ? null : Number(s));
  return lines.slice(1).map((line) => {
    const c = splitCsvLine(line);
    return {
      config: iCfg >= 0 ? c[iCfg] : "",
      mem_tokens: Number(c[iT]),
      seeds: c[iSeeds] === "" ? [] : c[iSeeds].split(";").map(Number),
      emPerSeed: c[iEms] === "" ? [] : c[iEms].split(";").map((v) => (v === "" ? null : Number(v))),
      emMean: num(c[iMean]),
      emStd: num(c[iStd]),
      haltMean: num(c[iHalt]),
      haltRange: c[iRange],
      tokenSteps: num(c[iSteps]),
    };
  });
}

export function parseExtendedCsv(text: string, source = "extended.csv"): ExtendedRow[] {
  const lines = text.split("\n").filter((l) => l.trim().length > 0);
  const header = splitCsvLine(lines[0]);
  for (const name of ["step", "em", "step_emb_index"]) {
    if (!header.includes(name)) throw new ParseError(`${source}: missing column "${name}"`);
  }
  return lines.slice(1).map((line) => {
    const c = splitCsvLine(line);
    const row: Record<string, number> = {};
    header.forEach((h, i) => (row[h] = Number(c[i])));
    return row as unknown as ExtendedRow;
  });
}

export function parsePerStepPredictions(text: string, source = "per_step_predictions.jsonl"): PerStepPredictions[] {
  return text
    .split("\n")
    .filter((l) => l.trim().length > 0)
    .map((line, i) => {
      const obj = JSON.parse(line);
      if (obj.kind !== "per_step_predictions") {
        throw new ParseError(`${source}:${i + 1}: unexpected kind ${obj.kind}`);
      }
      return obj as PerStepPredictions;
    });
}

// ---------------------------------------------------------------------------
// binary array container (magic PGRIDCK1, uint64 header length, JSON header)

export interface ContainerArray {
  name: string;
  shape: number[];
  data: Float64Array; // values upcast to f64 for plotting
}

export interface Container {
  meta: Record<string, unknown>;
  arrays: Map<string, ContainerArray>;
}

const MAGIC = "PGRIDCK1";

export function readContainer(path: string): Container {
  const buf = readFileSync(path);
  if (buf.subarray(0, 8).toString("latin1") !== MAGIC) {
    throw new ParseError(`${path}: bad magic`);
  }
  const headerLen = Number(buf.readBigUInt64LE(8));
  const header = JSON.parse(buf.subarray(16, 16 + headerLen).toString("utf-8"));
  if (header.version !== 1) throw new ParseError(`${path}: unsupported version`);
  const dataStart = 16 + headerLen;
  const arrays = new Map<string, ContainerArray>();
  for (const ent of header.arrays) {
    const count = ent.shape.reduce((a: number, b: number) => a * b, 1);
    const start = dataStart + ent.offset;
    let values: Float64Array;
    if (ent.dtype === "<f8") {
      values = new Float64Array(count);
      for (let i = 0; i < count; i++) values[i] = buf.readDoubleLE(start + 8 * i);
    } else if (ent.dtype === "<f4") {
      values = new Float64Array(count);
      for (let i = 0; i < count; i++) values[i] = buf.readFloatLE(start + 4 * i);
    } else if (ent.dtype === "<i8") {
      values = new Float64Array(count);
      for (let i = 0; i < count; i++) values[i] = Number(buf.readBigInt64LE(start + 8 * i));
    } else {
      throw new ParseError(`${path}: unsupported dtype ${ent.dtype} for ${ent.name}`);
    }
    arrays.set(ent.name, { name: ent.name, shape: ent.shape, data: values });
  }
  return { meta: header.meta ?? {}, arrays };
}

/** Attention dumps hold arrays named attn.step{k} of shape [B, heads, S, S]. */
export function attentionSteps(c: Container): Map<number, ContainerArray> {
  const out = new Map<number, ContainerArray>();
  for (const [name, arr] of c.arrays) {
    const m = /^attn\.step(\d+)$/.exec(name);
    if (!m) throw new ParseError(`unexpected array "${name}" in attention dump`);
    out.set(Number(m[1]), arr);
  }
  return out;
}
