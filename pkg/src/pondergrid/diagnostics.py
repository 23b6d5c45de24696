"""Instrumentation: attention-quadrant masses, halt histograms, run logs.

Attention mass is decomposed by query/key group. With T memory rows in
front of L sequence rows, each head's post-softmax map splits into four
quadrants; for sequence queries the memory-column and sequence-column
masses sum to one, and likewise for memory queries. These sums are exact
up to float accumulation and are asserted in tests.

Everything here observes; nothing mutates model or optimizer state, so
switching logging on and off cannot change a training trajectory.

Record schemas (JSONL, one object per line):
  step record      {"kind": "step", "step", "p_mean", "p_min", "p_max",
                    "frac_halted", "mean_weight", ["quadrants"]}
  halt histogram   {"kind": "halt_hist", "step", "counts": [per halt step]}
  per-step dump    {"kind": "per_step_predictions", "step", "em",
                    "correct_counts": [per sample], "predictions": [[...]]}
Attention dumps use the binary container (see checkpoint.py) with one
array per captured step named "attn.step{k}", shape [B, heads, S, S].
"""

import json
import os

import numpy as np

from . import checkpoint
from . import tensor as T
from .model import add_step_embedding, block_forward, embed_inputs, output_logits


def quadrant_mass(attn_weights, mem_tokens):
    """Per-head attention-quadrant fractions.

    attn_weights: [heads, S, S] or [B, heads, S, S], rows softmax-normalized.
    Returns a list of per-head dicts with keys sm, ss (sequence queries) and
    mm, ms (memory queries; absent when mem_tokens == 0). Means are uniform
    over query rows (and batch).
    """
    w = np.asarray(attn_weights)
    if w.ndim == 3:
        w = w[None]
    b, heads, s, s2 = w.shape
    if s != s2:
        raise ValueError(f"attention map must be square, got {w.shape}")
    t = mem_tokens
    if t > s:
        raise ValueError(f"mem_tokens {t} exceeds rows {s}")
    out = []
    for h in range(heads):
        m = w[:, h]
        seq_q = m[:, t:, :]
        rec = {
            "sm": float(seq_q[:, :, :t].sum(axis=-1).mean()) if t > 0 else 0.0,
            "ss": float(seq_q[:, :, t:].sum(axis=-1).mean()),
        }
        if t > 0:
            mem_q = m[:, :t, :]
            rec["mm"] = float(mem_q[:, :, :t].sum(axis=-1).mean())
            rec["ms"] = float(mem_q[:, :, t:].sum(axis=-1).mean())
        out.append(rec)
    return out


def head_averaged(attn_weights):
    """Arithmetic mean over heads (and batch): [S, S] map for heatmaps."""
    w = np.asarray(attn_weights)
    if w.ndim == 3:
        w = w[None]
    return w.mean(axis=(0, 1))


def halt_histogram(halt_state, k_run):
    """Counts of sequence tokens by 1-based halt step, length k_run."""
    steps = halt_state.seq_halt_steps().reshape(-1)
    return np.bincount(steps, minlength=k_run + 1)[1:k_run + 1].tolist()


class RunLogger:
    """Append-only JSONL writer for one run directory (single writer)."""

    def __init__(self, run_dir, name="diagnostics.jsonl"):
        os.makedirs(run_dir, exist_ok=True)
        self.path = os.path.join(run_dir, name)
        open(self.path, "a").close()

    def write(self, record):
        with open(self.path, "a") as fh:
            fh.write(json.dumps(record) + "\n")

    def write_steps(self, step, step_diags):
        for d in step_diags:
            rec = {"kind": "step", "train_step": step}
            rec.update(d.to_record())
            self.write(rec)


def save_attention_dump(path, captured, meta=None):
    """Write captured attention maps ({step: [B,heads,S,S]}) to a container."""
    arrays = {f"attn.step{k}": np.asarray(v) for k, v in sorted(captured.items())}
    checkpoint.save(path, arrays, meta=meta or {})


def load_attention_dump(path):
    arrays, meta = checkpoint.load(path)
    out = {}
    for name, arr in arrays.items():
        if not name.startswith("attn.step"):
            raise checkpoint.CheckpointError(f"{path}: unexpected array {name}")
        out[int(name[len("attn.step"):])] = arr
    return out, meta


def default_capture_steps(k_run):
    """The three depths worth keeping by default: first, middle, last."""
    return sorted({0, k_run // 2, k_run - 1})


def dump_per_step_predictions(tokens, targets, params, k_run, out_path=None):
    """Greedy decode after every iteration; returns (and writes) records.

    One record per step: exact-match, per-sample correct-cell counts, and
    the predicted grids. Feeds the per-step puzzle-solving visualization.
    """
    cfg = params.cfg
    tokens = np.asarray(tokens)
    targets = np.asarray(targets)
    records = []
    with T.no_grad():
        h = embed_inputs(tokens, params, step=0)
        for k in range(1, k_run + 1):
            if k > 1 and not cfg.step_emb_first_only:
                h = add_step_embedding(h, params, k - 1)
            h, _ = block_forward(h, params)
            pred = np.argmax(output_logits(h, params).data, axis=-1)
            correct = (pred == targets).sum(axis=-1)
            records.append({
                "kind": "per_step_predictions",
                "step": k - 1,
                "em": float((pred == targets).all(axis=-1).mean()),
                "correct_counts": correct.astype(int).tolist(),
                "predictions": pred.astype(int).tolist(),
            })
    if out_path is not None:
        with open(out_path, "w") as fh:
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
    return records
