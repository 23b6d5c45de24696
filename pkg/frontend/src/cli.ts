#!/usr/bin/env node
/** plotkit: render figures from pondergrid run outputs.
 *
 *   plotkit trajectories --out FIG.svg RUN_DIR_OR_METRICS...
 *       [--window N] [--warmup STEPSxBATCH ...]
 *   plotkit memory-curve --out FIG.svg SUMMARY.csv
 *   plotkit extended --out FIG.svg --k-train K CSV...
 *   plotkit attention --out-dir DIR DUMP.ckpt [--mem-tokens T]
 *   plotkit puzzle --out FIG.svg --solution 1234... --givens 1030...
 *       [--sample I] PER_STEP.jsonl
 *
 * Pure consumer: reads run outputs, writes SVG files, never mutates inputs.
 */

import { existsSync, mkdirSync, readFileSync, statSync, writeFileSync } from "node:fs";
import { basename, join } from "node:path";

import { attentionSteps, loadRun, parseExtendedCsv, parsePerStepPredictions,
         parseSweepCsv, readContainer } from "./parse.js";
import { batchAverage, renderAttentionStep } from "./plots/attention.js";
import { renderExtended } from "./plots/extended.js";
import { renderMemoryCurve } from "./plots/memoryCurve.js";
import { renderPuzzleStrip } from "./plots/puzzle.js";
import { renderTrajectories } from "./plots/trajectories.js";

interface Parsed {
  command: string;
  positional: string[];
  options: Map<string, string[]>;
}

function parseArgs(argv: string[]): Parsed {
  const [command, ...rest] = argv;
  const positional: string[] = [];
  const options = new Map<string, string[]>();
  for (let i = 0; i < rest.length; i++) {
    const a = rest[i];
    if (a.startsWith("--")) {
      const key = a.slice(2);
      const val = rest[i + 1];
      if (val === undefined || val.startsWith("--")) {
        options.set(key, [...(options.get(key) ?? []), "true"]);
      } else {
        options.set(key, [...(options.get(key) ?? []), val]);
        i++;
      }
    } else {
      positional.push(a);
    }
  }
  return { command: command ?? "", positional, options };
}

function opt(p: Parsed, key: string): string | undefined {
  return p.options.get(key)?.at(-1);
}

function requireOpt(p: Parsed, key: string): string {
  const v = opt(p, key);
  if (v === undefined) throw new Error(`missing required --${key}`);
  return v;
}

function metricsPath(p: string): string {
  return existsSync(p) && statSync(p).isDirectory() ? join(p, "metrics.jsonl") : p;
}

function cmdTrajectories(p: Parsed): void {
  if (p.positional.length === 0) throw new Error("pass at least one run dir or metrics.jsonl");
  const runs = p.positional.map((path) => loadRun(metricsPath(path),
    basename(path.replace(/\/metrics\.jsonl$/, ""))));
  const warmup = (p.options.get("warmup") ?? []).map((spec) => {
    const m = /^(\d+)x(\d+)$/.exec(spec);
    if (!m) throw new Error(`--warmup expects STEPSxBATCH, got ${spec}`);
    return { steps: Number(m[1]), batch: Number(m[2]) };
  });
  const svg = renderTrajectories(runs, {
    rollingWindow: Number(opt(p, "window") ?? 5),
    warmup,
  });
  writeFileSync(requireOpt(p, "out"), svg);
}

function cmdMemoryCurve(p: Parsed): void {
  const rows = parseSweepCsv(readFileSync(p.positional[0], "utf-8"), p.positional[0]);
  writeFileSync(requireOpt(p, "out"), renderMemoryCurve(rows));
}

function cmdExtended(p: Parsed): void {
  const series = p.positional.map((path) => ({
    label: basename(path).replace(/\.csv$/, ""),
    rows: parseExtendedCsv(readFileSync(path, "utf-8"), path),
  }));
  const svg = renderExtended(series, Number(requireOpt(p, "k-train")));
  writeFileSync(requireOpt(p, "out"), svg);
}

function cmdAttention(p: Parsed): void {
  const dump = readContainer(p.positional[0]);
  const t = Number(opt(p, "mem-tokens") ?? dump.meta["mem_tokens"] ?? 0);
  const outDir = requireOpt(p, "out-dir");
  mkdirSync(outDir, { recursive: true });
  const steps = attentionSteps(dump);
  if (steps.size === 0) throw new Error("attention dump holds no steps");
  for (const [step, arr] of [...steps.entries()].sort((a, b) => a[0] - b[0])) {
    const svg = renderAttentionStep(batchAverage(arr), t, step);
    writeFileSync(join(outDir, `attention_step${step}.svg`), svg);
  }
}

function cmdPuzzle(p: Parsed): void {
  const recs = parsePerStepPredictions(readFileSync(p.positional[0], "utf-8"),
                                       p.positional[0]);
  const solution = requireOpt(p, "solution").split("").map(Number);
  const givens = (opt(p, "givens") ?? "0".repeat(solution.length)).split("").map(Number);
  const svg = renderPuzzleStrip({
    steps: recs,
    solution,
    givens,
    sample: Number(opt(p, "sample") ?? 0),
  });
  writeFileSync(requireOpt(p, "out"), svg);
}

const COMMANDS: Record<string, (p: Parsed) => void> = {
  "trajectories": cmdTrajectories,
  "memory-curve": cmdMemoryCurve,
  "extended": cmdExtended,
  "attention": cmdAttention,
  "puzzle": cmdPuzzle,
};

export function main(argv: string[]): number {
  const p = parseArgs(argv);
  const fn = COMMANDS[p.command];
  if (!fn) {
    console.error(`usage: plotkit <${Object.keys(COMMANDS).join("|")}> ...`);
    return 2;
  }
  try {
    fn(p);
    return 0;
  } catch (err) {
    console.error(`plotkit ${p.command}: ${(err as Error).message}`);
    return 1;
  }
}

const invokedDirectly = process.argv[1] !== undefined &&
  import.meta.url.endsWith(basename(process.argv[1]));
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
