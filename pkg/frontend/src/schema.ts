/** Record shapes produced by the training/diagnostics pipeline.
 *
 * These mirror the documented output schemas; the plotkit is a pure
 * consumer and never writes into a run directory.
 */

/** One line of metrics.jsonl (appended per evaluation). */
export interface MetricsRecord {
  step: number;
  samples_seen: number;
  lr: number;
  lambda_t: number;
  train_loss: number;
  eval_em: number;
  mean_halt: number;
  halt_min: number;
  halt_max: number;
  router_grad_norm: number;
}

export const METRICS_FIELDS: ReadonlyArray<keyof MetricsRecord> = [
  "step", "samples_seen", "lr", "lambda_t", "train_loss", "eval_em",
  "mean_halt", "halt_min", "halt_max", "router_grad_norm",
];

/** One row of a sweep summary.csv. */
export interface SweepRow {
  config: string;
  mem_tokens: number;
  seeds: number[];
  emPerSeed: Array<number | null>;
  emMean: number | null;
  emStd: number | null;
  haltMean: number | null;
  haltRange: string;
  tokenSteps: number | null;
}

/** One row of an extended-inference CSV (per ponder step). */
export interface ExtendedRow {
  step: number;
  em: number;
  step_emb_index: number;
  router_p_mean: number;
}

/** Per-step prediction record from per_step_predictions.jsonl. */
export interface PerStepPredictions {
  kind: "per_step_predictions";
  step: number;
  em: number;
  correct_counts: number[];
  predictions: number[][];
}

/** A named run: label + its parsed metrics series. */
export interface RunSeries {
  label: string;
  records: MetricsRecord[];
}
