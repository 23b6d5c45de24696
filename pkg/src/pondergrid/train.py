"""Loss, optimizer, schedules, EMA, metrics, and the training loop.

The recipe: AdamW with cosine-decayed learning rate, an EMA of the weights
used for evaluation, cross entropy over every cell of the grid (givens
included), and a ponder-cost term whose coefficient ramps linearly from
zero over a warmup so depth is established before compression kicks in.

One metrics record is appended per evaluation; the field names below are a
stable interface consumed by the plotting frontend, do not rename them:
step, samples_seen, lr, lambda_t, train_loss, eval_em, mean_halt, halt_min,
halt_max, router_grad_norm.
"""

import json
import math
import os
import time
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from . import checkpoint
from . import kernels as K
from .act import ActConfig, act_loop, fixed_depth_forward, ponder_cost
from .model import init_params, output_logits
from .sudoku import batch_from_puzzles

METRICS_FIELDS = ["step", "samples_seen", "lr", "lambda_t", "train_loss",
                  "eval_em", "mean_halt", "halt_min", "halt_max",
                  "router_grad_norm"]


@dataclass
class TrainConfig:
    lr_max: float = 3e-4
    batch_size: int = 256
    epochs: float = 4.0
    max_steps: int = 0            # 0 = derive from epochs
    ponder_lambda: float = 0.0
    lambda_warmup_steps: int = 0
    ema_decay: float = 0.999
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 0.0        # 0 = off
    lr_schedule: str = "cosine"   # "cosine" | "constant"
    seed: int = 0
    eval_every: int = 100
    eval_batch_size: int = 256
    loss_blanks_only: bool = False

    def __post_init__(self):
        for name in ("lr_max", "batch_size", "ema_decay", "eval_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.ponder_lambda < 0 or self.lambda_warmup_steps < 0:
            raise ValueError("lambda settings must be >= 0")
        if self.lr_schedule not in ("cosine", "constant"):
            raise ValueError(
                f"lr_schedule must be cosine|constant, got {self.lr_schedule!r}")


# ---------------------------------------------------------------------------
# schedules


def lambda_at_step(step, lam, warmup_steps):
    """Linear ramp 0 -> lam over warmup_steps, then constant."""
    if step < 0:
        raise ValueError("step must be >= 0")
    if warmup_steps <= 0:
        return lam
    if step >= warmup_steps:
        return lam
    return lam * (step / warmup_steps)


def cosine_lr(step, total_steps, lr_max):
    """Half-cosine decay from lr_max at step 0 to 0 at total_steps."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    if total_steps == 0:
        return lr_max
    return lr_max * (1.0 + math.cos(math.pi * step / total_steps)) / 2.0


# ---------------------------------------------------------------------------
# optimizer / EMA


class AdamW:
    """Decoupled-weight-decay Adam over a ModelParams instance."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=0.01):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in params.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in params.items()}

    def step(self, params, lr, grad_clip=0.0):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        scale = 1.0
        if grad_clip > 0.0:
            total = 0.0
            for _, p in params.items():
                if p.grad is not None:
                    total += float((p.grad.astype(np.float64) ** 2).sum())
            norm = math.sqrt(total)
            if norm > grad_clip:
                scale = grad_clip / norm
        for name, p in params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            elif scale != 1.0:
                g = g * scale
            K.adamw_update(p.data, g, self.m[name], self.v[name],
                           lr, self.beta1, self.beta2, self.eps,
                           self.weight_decay, bc1, bc2)

    def state_arrays(self):
        out = {f"adam_m.{n}": a for n, a in self.m.items()}
        out.update({f"adam_v.{n}": a for n, a in self.v.items()})
        return out

    def load_state(self, arrays, t):
        self.t = t
        for n in self.m:
            self.m[n][...] = arrays[f"adam_m.{n}"]
            self.v[n][...] = arrays[f"adam_v.{n}"]


def ema_update(ema_arrays, params, decay):
    """ema <- decay*ema + (1-decay)*params, in place."""
    for name, p in params.items():
        e = ema_arrays[name]
        e *= decay
        e += (1.0 - decay) * p.data
    return ema_arrays


def debiased_ema(ema_arrays, decay, t):
    """Bias-corrected view of a zero-initialized EMA after t updates.

    Dividing by 1 - decay^t removes the cold-start pull toward zero, so a
    short run's evaluation weights track the trajectory average instead of
    the initialization. At decay=1 (frozen accumulator) the raw arrays come
    back unchanged.
    """
    if decay >= 1.0 or t == 0:
        return ema_arrays
    corr = 1.0 - decay ** t
    return {n: a / corr for n, a in ema_arrays.items()}


# ---------------------------------------------------------------------------
# losses and metrics


def total_loss(logits, targets, halt_state, lambda_t, blanks_only_mask=None,
               sequence_only_ponder=False):
    """Mean cross entropy over cells plus lambda_t times mean ponder cost.

    halt_state may be None (fixed-depth mode), in which case the ponder term
    is absent regardless of lambda_t.
    """
    ce = T.cross_entropy_logits(logits, targets)
    if blanks_only_mask is not None:
        m = blanks_only_mask.astype(logits.dtype)
        denom = max(float(m.sum()), 1.0)
        ce_mean = T.mul(T.tsum(T.mul(ce, T.Tensor(m))), 1.0 / denom)
    else:
        ce_mean = T.tmean(ce)
    if halt_state is None or lambda_t == 0.0:
        return ce_mean
    rho = ponder_cost(halt_state, sequence_only=sequence_only_ponder)
    return T.add(ce_mean, T.mul(rho, float(lambda_t)))


def exact_match(predictions, targets):
    """Fraction of puzzles whose every cell is predicted correctly."""
    predictions = np.asarray(predictions)
    targets = np.asarray(targets)
    return float((predictions == targets).all(axis=-1).mean())


def token_steps(mem_tokens, seq_len, mean_halt):
    """Total token-step compute: (T + L) * mean halt, rounded half-up."""
    return int(math.floor((mem_tokens + seq_len) * mean_halt + 0.5))


# ---------------------------------------------------------------------------
# evaluation


def evaluate(params, eval_batch, act_cfg, batch_size=256):
    """Greedy-decode EM and halt statistics on a fixed held-out batch."""
    n = len(eval_batch)
    ems = []
    halts = []
    with T.no_grad():
        for s in range(0, n, batch_size):
            tok = eval_batch.tokens[s:s + batch_size]
            tgt = eval_batch.targets[s:s + batch_size]
            if act_cfg.act_enabled:
                blended, hs, _ = act_loop(tok, params, act_cfg)
                logits = output_logits(blended, params)
                halts.append(hs.seq_halt_steps())
            else:
                h, _ = fixed_depth_forward(tok, params, act_cfg.k_run)
                logits = output_logits(h, params)
            pred = np.argmax(logits.data, axis=-1)
            ems.append((pred == tgt).all(axis=-1))
    em = float(np.concatenate(ems).mean())
    if halts:
        h = np.concatenate(halts).astype(np.float64)
        return em, float(h.mean()), float(h.min()), float(h.max())
    k = float(act_cfg.k_run)
    return em, k, k, k


def router_grad_norm(params):
    """L2 norm over router weight + bias gradients only."""
    total = 0.0
    for name in ("router_w", "router_b"):
        g = params[name].grad
        if g is not None:
            total += float((g.astype(np.float64) ** 2).sum())
    return math.sqrt(total)


# ---------------------------------------------------------------------------
# the loop


def run_training(params, train_puzzles, eval_puzzles, train_cfg, act_cfg,
                 run_dir=None, diagnostics_hook=None, log=print,
                 config_text=None, resume=None):
    """Train to completion; returns a summary dict.

    Writes metrics.jsonl and checkpoints/{last,ema}.ckpt under run_dir when
    given. diagnostics_hook(step, params, halt_state, diags) is called after
    each optimizer step; it must not mutate anything (pure observation).
    resume: optional dict with "params", "ema", "opt", "t" arrays to warm-start.
    """
    cfg = params.cfg
    rng = np.random.default_rng(train_cfg.seed + 1)
    train_batch = batch_from_puzzles(train_puzzles)
    eval_batch = batch_from_puzzles(eval_puzzles)
    n_train = len(train_batch)

    steps_per_epoch = max(1, math.ceil(n_train / train_cfg.batch_size))
    total_steps = train_cfg.max_steps or int(round(train_cfg.epochs * steps_per_epoch))

    opt = AdamW(params, beta1=train_cfg.beta1, beta2=train_cfg.beta2,
                eps=train_cfg.adam_eps, weight_decay=train_cfg.weight_decay)
    if resume is not None:
        params.load_state(resume["params"])
        if "opt" in resume:
            opt.load_state(resume["opt"], resume.get("t", 0))
        ema = {n: a.copy() for n, a in resume.get("ema", resume["params"]).items()
               if n in params.tensors}
        ema_t = resume.get("t", 0)
    else:
        # zero-initialized, read back through debiased_ema at eval time
        ema = {n: np.zeros_like(a) for n, a in params.clone_arrays().items()}
        ema_t = 0
    eval_params = init_params(cfg, seed=train_cfg.seed)  # holder for EMA weights

    metrics_path = None
    if run_dir is not None:
        os.makedirs(os.path.join(run_dir, "checkpoints"), exist_ok=True)
        metrics_path = os.path.join(run_dir, "metrics.jsonl")
        open(metrics_path, "w").close()

    order = rng.permutation(n_train)
    cursor = 0
    t0 = time.time()
    last_metrics = None

    for step in range(total_steps):
        if cursor + train_cfg.batch_size > n_train:
            order = rng.permutation(n_train)
            cursor = 0
        idx = order[cursor:cursor + train_cfg.batch_size]
        cursor += train_cfg.batch_size
        tok = train_batch.tokens[idx]
        tgt = train_batch.targets[idx]

        lr = train_cfg.lr_max if train_cfg.lr_schedule == "constant" \
            else cosine_lr(step, total_steps, train_cfg.lr_max)
        lam_t = lambda_at_step(step, train_cfg.ponder_lambda,
                               train_cfg.lambda_warmup_steps)

        params.zero_grad()
        if act_cfg.act_enabled:
            blended, hs, diags = act_loop(tok, params, act_cfg)
            logits = output_logits(blended, params)
        else:
            h, _ = fixed_depth_forward(tok, params, act_cfg.k_run)
            logits = output_logits(h, params)
            hs, diags = None, []
        mask = (tok == 0) if train_cfg.loss_blanks_only else None
        loss = total_loss(logits, tgt, hs, lam_t, blanks_only_mask=mask,
                          sequence_only_ponder=act_cfg.ponder_sequence_only)
        loss.backward()
        rnorm = router_grad_norm(params)
        opt.step(params, lr, grad_clip=train_cfg.grad_clip)
        ema_update(ema, params, train_cfg.ema_decay)
        ema_t += 1

        if diagnostics_hook is not None:
            diagnostics_hook(step, params, hs, diags)

        if (step + 1) % train_cfg.eval_every == 0 or step == total_steps - 1:
            eval_params.load_state(debiased_ema(ema, train_cfg.ema_decay, ema_t))
            em, h_mean, h_min, h_max = evaluate(
                eval_params, eval_batch, act_cfg,
                batch_size=train_cfg.eval_batch_size)
            rec = {
                "step": step + 1,
                "samples_seen": (step + 1) * train_cfg.batch_size,
                "lr": lr,
                "lambda_t": lam_t,
                "train_loss": float(loss.item()),
                "eval_em": em,
                "mean_halt": h_mean,
                "halt_min": h_min,
                "halt_max": h_max,
                "router_grad_norm": rnorm,
            }
            last_metrics = rec
            if metrics_path:
                with open(metrics_path, "a") as fh:
                    fh.write(json.dumps(rec) + "\n")
            if log:
                log(f"step {step + 1}/{total_steps} loss={rec['train_loss']:.4f} "
                    f"em={em:.4f} halt={h_mean:.2f} ({time.time() - t0:.0f}s)")

    if run_dir is not None:
        meta = {"step": total_steps, "k_train": cfg.max_ponder}
        if config_text:
            meta["config"] = config_text
        checkpoint.save(os.path.join(run_dir, "checkpoints", "last.ckpt"),
                        params.state_dict(), meta=meta)
        checkpoint.save(os.path.join(run_dir, "checkpoints", "ema.ckpt"),
                        debiased_ema(ema, train_cfg.ema_decay, ema_t), meta=meta)
        opt_state = opt.state_arrays()
        opt_state["adam_t"] = np.array([opt.t], dtype=np.int64)
        checkpoint.save(os.path.join(run_dir, "checkpoints", "opt.ckpt"),
                        opt_state, meta=meta)
    return {"final": last_metrics, "total_steps": total_steps,
            "ema": debiased_ema(ema, train_cfg.ema_decay, ema_t),
            "seconds": time.time() - t0}
