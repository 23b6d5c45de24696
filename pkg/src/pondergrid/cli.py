"""Command-line surface: train, eval, sweep, infer-extended, diagnose.

Every command that starts a run writes a config snapshot into the run
directory first; rerunning from that snapshot (at 64-bit precision)
reproduces the run. The run-directory root comes from --run-dir, else the
PONDERGRID_RUNS environment variable, else ./runs.

Exit codes: 0 ok, 2 config error, 3 data error, 4 checkpoint error,
1 anything else; errors print one machine-readable line to stderr:
``error category=<cat> message=<text>``.
"""

import argparse
import csv
import json
import os
import statistics
import sys
import time

import numpy as np

from . import checkpoint, config as cfgmod, diagnostics, sudoku
from . import tensor as T
from .act import extended_inference
from .kernels import BACKEND
from .model import ffn_width, init_params
from .sudoku import DataError
from .train import evaluate, run_training, token_steps


class CliError(Exception):
    def __init__(self, category, message, code):
        super().__init__(message)
        self.category = category
        self.code = code


def _runs_root(args):
    return args.run_dir or os.environ.get("PONDERGRID_RUNS", "runs")


def _load_config(args):
    if args.preset:
        cfg = cfgmod.load_preset(args.preset)
    elif args.config:
        cfg = cfgmod.load_file(args.config)
    else:
        raise cfgmod.ConfigError("pass --preset NAME or --config PATH")
    return cfgmod.apply_overrides(cfg, args.set or [])


_dataset_cache = {}


def _datasets(cfg):
    data = cfg.data()
    if data["kind"] == "csv":
        if not data["train_csv"] or not data["eval_csv"]:
            raise cfgmod.ConfigError("data.kind=csv requires train_csv and eval_csv")
        train = list(sudoku.load_csv(data["train_csv"], n=data["n"]))
        eval_ = list(sudoku.load_csv(data["eval_csv"], n=data["n"]))
        return train, eval_
    if data["kind"] != "generate":
        raise cfgmod.ConfigError(f"unknown data.kind {data['kind']!r}")
    key = (data["n"], data["n_train"], data["n_eval"], data["data_seed"],
           data["givens_min"], data["givens_max"])
    if key not in _dataset_cache:
        _dataset_cache[key] = sudoku.generate_dataset(
            data["n_train"], data["n_eval"], data["data_seed"], n=data["n"],
            n_givens_range=(data["givens_min"], data["givens_max"]))
    return _dataset_cache[key]


def _single_run(cfg, run_dir, resume_path=None, log=print):
    os.makedirs(run_dir, exist_ok=True)
    snapshot = cfg.snapshot_text()
    with open(os.path.join(run_dir, "config.ini"), "w") as fh:
        fh.write(snapshot)
    mc = cfg.model_config()
    ac = cfg.act_config()
    tc = cfg.train_config()
    train_puzzles, eval_puzzles = _datasets(cfg)
    params = init_params(mc, seed=tc.seed)
    resume = None
    if resume_path:
        arrays, meta = checkpoint.load(resume_path)
        resume = {"params": arrays, "t": int(meta.get("step", 0))}
        opt_path = os.path.join(os.path.dirname(resume_path), "opt.ckpt")
        if os.path.exists(opt_path):
            opt_arrays, opt_meta = checkpoint.load(opt_path)
            resume["opt"] = opt_arrays
            resume["t"] = int(opt_arrays.get("adam_t", [0])[0])
        ema_path = os.path.join(os.path.dirname(resume_path), "ema.ckpt")
        if os.path.exists(ema_path):
            resume["ema"] = checkpoint.load(ema_path)[0]

    # per-eval router-step records land in the run directory alongside the
    # metrics; pure observation, no effect on the trajectory
    logger = diagnostics.RunLogger(run_dir)

    def hook(step, _params, _hs, diags):
        if diags and (step + 1) % tc.eval_every == 0:
            logger.write_steps(step + 1, diags)

    summary = run_training(params, train_puzzles, eval_puzzles, tc, ac,
                           run_dir=run_dir, config_text=snapshot, log=log,
                           diagnostics_hook=hook, resume=resume)
    if cfg.run()["capture_attention"]:
        _dump_attention(run_dir, params, eval_puzzles, ac)
    return summary


def _dump_attention(run_dir, params, eval_puzzles, ac, samples=64):
    from .act import act_loop, fixed_depth_forward
    batch = sudoku.batch_from_puzzles(eval_puzzles[:samples])
    capture = diagnostics.default_capture_steps(ac.k_run)
    with T.no_grad():
        if ac.act_enabled:
            _, hs, _ = act_loop(batch.tokens, params, ac,
                                capture_attn_steps=capture)
            captured = hs.captured_attention
        else:
            _, captured = fixed_depth_forward(batch.tokens, params, ac.k_run,
                                              capture_attn_steps=capture)
    diagnostics.save_attention_dump(
        os.path.join(run_dir, "attention.ckpt"), captured,
        meta={"mem_tokens": params.cfg.mem_tokens, "steps": capture})


def cmd_train(args):
    cfg = _load_config(args)
    if cfg.is_sweep():
        return cmd_sweep(args)
    run_dir = os.path.join(_runs_root(args), args.name or cfg.run()["name"])
    summary = _single_run(cfg, run_dir, resume_path=args.resume)
    final = summary["final"] or {}
    print(f"run dir: {run_dir}")
    print(f"final eval_em={final.get('eval_em')} mean_halt={final.get('mean_halt')}")
    return 0


def cmd_sweep(args):
    cfg = _load_config(args)
    root = os.path.join(_runs_root(args), args.name or cfg.run()["name"])
    os.makedirs(root, exist_ok=True)
    with open(os.path.join(root, "config.ini"), "w") as fh:
        fh.write(cfg.snapshot_text())

    # group grid cells by everything except the seed so the summary can
    # aggregate per configuration across seeds; the group's non-seed sweep
    # keys become its label so e.g. bias-sweep rows stay distinguishable
    non_seed_axes = sorted(k for k in cfg.sweep if k != "train.seed")
    rows = {}
    for label, cell in cfg.expand_sweep():
        run_dir = os.path.join(root, label)
        mc_vals = cell.values["model"]
        t_mem = mc_vals.get("mem_tokens", 16)
        seed = cell.values["train"].get("seed", 0)
        group = tuple(sorted((f"{s}.{k}", v) for s, kv in cell.values.items()
                             for k, v in kv.items() if (s, k) != ("train", "seed")))
        try:
            summary = _single_run(cell, run_dir)
            final = summary["final"] or {}
            ok = True
        except Exception as exc:  # partial-failure tolerant
            print(f"sweep cell {label} failed: {exc}", file=sys.stderr)
            final, ok = {}, False
        if group not in rows:
            gvals = dict(group)
            glabel = " ".join(
                f"{axis.split('.', 1)[1]}={gvals[axis]}" for axis in non_seed_axes
                if axis in gvals) or "single"
            rows[group] = {"label": glabel, "mem_tokens": t_mem,
                           "seq_len": mc_vals.get("seq_len", 81), "cells": []}
        rows[group]["cells"].append({
            "label": label, "seed": seed, "ok": ok,
            "em": final.get("eval_em"), "halt": final.get("mean_halt"),
            "halt_min": final.get("halt_min"), "halt_max": final.get("halt_max"),
        })

    out_path = os.path.join(root, "summary.csv")
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["config", "mem_tokens", "seeds", "em_per_seed", "em_mean",
                    "em_std", "halt_mean", "halt_range", "token_steps",
                    "failed_cells"])
        for group, info in rows.items():
            cells = info["cells"]
            good = [c for c in cells if c["ok"]]
            ems = [c["em"] for c in good if c["em"] is not None]
            halts = [c["halt"] for c in good if c["halt"] is not None]
            em_mean = sum(ems) / len(ems) if ems else ""
            em_std = statistics.stdev(ems) if len(ems) > 1 else ""
            halt_mean = sum(halts) / len(halts) if halts else ""
            hmins = [c["halt_min"] for c in good if c["halt_min"] is not None]
            hmaxs = [c["halt_max"] for c in good if c["halt_max"] is not None]
            halt_range = f"{min(hmins):.2f}-{max(hmaxs):.2f}" if hmins else ""
            tsteps = token_steps(info["mem_tokens"], info["seq_len"], halt_mean) \
                if halt_mean != "" else ""
            w.writerow([
                info["label"],
                info["mem_tokens"],
                ";".join(str(c["seed"]) for c in cells),
                ";".join("" if c["em"] is None else f"{c['em']:.4f}" for c in cells),
                em_mean if em_mean == "" else f"{em_mean:.4f}",
                em_std if em_std == "" else f"{em_std:.4f}",
                halt_mean if halt_mean == "" else f"{halt_mean:.2f}",
                halt_range,
                tsteps,
                ";".join(c["label"] for c in cells if not c["ok"]),
            ])
    print(f"sweep summary: {out_path}")
    return 0


def _load_checkpoint_bundle(ckpt_path, config_path=None):
    if not os.path.exists(ckpt_path):
        raise CliError("checkpoint", f"checkpoint not found: {ckpt_path}", 4)
    arrays, meta = checkpoint.load(ckpt_path)
    text = None
    if config_path:
        with open(config_path) as fh:
            text = fh.read()
    elif meta.get("config"):
        text = meta["config"]
    else:
        sibling = os.path.join(os.path.dirname(ckpt_path), os.pardir, "config.ini")
        if os.path.exists(sibling):
            with open(sibling) as fh:
                text = fh.read()
    if text is None:
        raise CliError("config", "no config found for checkpoint; pass --config", 2)
    cfg = cfgmod.parse_text(text)
    params = init_params(cfg.model_config(), seed=cfg.train_config().seed)
    params.load_state(arrays)
    return cfg, params


def cmd_eval(args):
    cfg, params = _load_checkpoint_bundle(args.checkpoint, args.config)
    _, eval_puzzles = _datasets(cfg)
    batch = sudoku.batch_from_puzzles(eval_puzzles)
    ac = cfg.act_config()
    em, h_mean, h_min, h_max = evaluate(params, batch, ac)
    print(json.dumps({"eval_em": em, "mean_halt": h_mean,
                      "halt_min": h_min, "halt_max": h_max}))
    return 0


def cmd_infer_extended(args):
    cfg, params = _load_checkpoint_bundle(args.checkpoint, args.config)
    _, eval_puzzles = _datasets(cfg)
    batch = sudoku.batch_from_puzzles(eval_puzzles)
    k_run = args.k_run or 2 * params.cfg.max_ponder
    result = extended_inference(batch.tokens, params, k_run)
    out_path = args.out or os.path.join(
        os.path.dirname(args.checkpoint), os.pardir, f"extended_em_k{k_run}.csv")
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "em", "step_emb_index", "router_p_mean"])
        for k in range(k_run):
            em = float((result["predictions"][k] == batch.targets)
                       .all(axis=-1).mean())
            w.writerow([k, f"{em:.6f}", result["step_emb_indices"][k],
                        f"{result['router_p_mean'][k]:.6f}"])
    print(f"per-step EM written: {out_path}")
    return 0


def cmd_diagnose(args):
    from .act import act_loop
    cfg, params = _load_checkpoint_bundle(args.checkpoint, args.config)
    _, eval_puzzles = _datasets(cfg)
    batch = sudoku.batch_from_puzzles(eval_puzzles[:args.samples])
    ac = cfg.act_config()
    out_dir = args.out or os.path.join(os.path.dirname(args.checkpoint), os.pardir,
                                       "diagnose")
    os.makedirs(out_dir, exist_ok=True)
    capture = diagnostics.default_capture_steps(ac.k_run)
    logger = diagnostics.RunLogger(out_dir)
    if ac.act_enabled:
        with T.no_grad():
            _, halt_state, diags = act_loop(batch.tokens, params, ac,
                                            capture_attn_steps=capture)
        logger.write_steps(0, diags)
        logger.write({"kind": "halt_hist", "step": 0,
                      "counts": diagnostics.halt_histogram(halt_state, ac.k_run)})
        captured = halt_state.captured_attention
    else:
        from .act import fixed_depth_forward
        with T.no_grad():
            _, captured = fixed_depth_forward(batch.tokens, params, ac.k_run,
                                              capture_attn_steps=capture)
    diagnostics.save_attention_dump(
        os.path.join(out_dir, "attention.ckpt"), captured,
        meta={"mem_tokens": params.cfg.mem_tokens, "steps": capture})
    diagnostics.dump_per_step_predictions(
        batch.tokens, batch.targets, params, ac.k_run,
        out_path=os.path.join(out_dir, "per_step_predictions.jsonl"))
    print(f"diagnostics written: {out_dir}")
    return 0


def cmd_gen_data(args):
    os.makedirs(args.out, exist_ok=True)
    train, eval_ = sudoku.generate_dataset(
        args.n_train, args.n_eval, args.seed, n=args.n,
        n_givens_range=(args.givens_min, args.givens_max))
    sudoku.save_csv(os.path.join(args.out, "train.csv"), train)
    sudoku.save_csv(os.path.join(args.out, "eval.csv"), eval_)
    print(f"wrote {len(train)} train / {len(eval_)} eval puzzles to {args.out}")
    return 0


def cmd_param_count(args):
    cfg = _load_config(args)
    mc = cfg.model_config()
    params = init_params(mc, seed=0)
    for name, n in params.count_by_group().items():
        print(f"{name:16s} {n:>12,}")
    print(f"{'total':16s} {params.n_params():>12,}  "
          f"(ffn width {ffn_width(mc.hidden)})")
    return 0


def cmd_backend(args):
    print(f"kernel backend: {BACKEND}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="pondergrid")
    sub = p.add_subparsers(dest="command", required=True)

    def add_cfg(sp):
        sp.add_argument("--preset", choices=cfgmod.PRESETS)
        sp.add_argument("--config")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
        sp.add_argument("--run-dir")
        sp.add_argument("--name")

    sp = sub.add_parser("train", help="train a model from a config or preset")
    add_cfg(sp)
    sp.add_argument("--resume", help="checkpoint to warm-start from")
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("sweep", help="run a [sweep] grid and summarize")
    add_cfg(sp)
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("eval", help="evaluate a checkpoint")
    sp.add_argument("checkpoint")
    sp.add_argument("--config")
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("infer-extended",
                        help="run inference past the trained depth")
    sp.add_argument("checkpoint")
    sp.add_argument("--config")
    sp.add_argument("--k-run", type=int)
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_infer_extended)

    sp = sub.add_parser("diagnose", help="attention/halting dumps for a checkpoint")
    sp.add_argument("checkpoint")
    sp.add_argument("--config")
    sp.add_argument("--samples", type=int, default=64)
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_diagnose)

    sp = sub.add_parser("gen-data", help="generate a puzzle dataset as CSV")
    sp.add_argument("--out", required=True)
    sp.add_argument("--n", type=int, default=4)
    sp.add_argument("--n-train", type=int, default=50000)
    sp.add_argument("--n-eval", type=int, default=2000)
    sp.add_argument("--seed", type=int, default=1234)
    sp.add_argument("--givens-min", type=int, default=4)
    sp.add_argument("--givens-max", type=int, default=8)
    sp.set_defaults(fn=cmd_gen_data)

    sp = sub.add_parser("param-count", help="print parameter counts by group")
    add_cfg(sp)
    sp.set_defaults(fn=cmd_param_count)

    sp = sub.add_parser("backend", help="print the active kernel backend")
    sp.set_defaults(fn=cmd_backend)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except cfgmod.ConfigError as exc:
        print(f"error category=config message={exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error category=data message={exc}", file=sys.stderr)
        return 3
    except (checkpoint.CheckpointError, FileNotFoundError) as exc:
        print(f"error category=checkpoint message={exc}", file=sys.stderr)
        return 4
    except CliError as exc:
        print(f"error category={exc.category} message={exc}", file=sys.stderr)
        return exc.code
    except Exception as exc:  # anything else is an internal error
        print(f"error category=internal message={exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
