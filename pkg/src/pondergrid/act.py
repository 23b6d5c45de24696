"""Per-token adaptive computation over the shared block.

Every token (memory tokens included) carries a sigmoid router. At iteration
k the router emits p_k from the block output; a token halts at the first k
where its running total of p would reach 1 - epsilon, taking the remainder
1 - sum(p_<k) as its final blend weight, and tokens that never cross take
the remainder at the iteration budget. The model output is the per-token
weighted blend of the iteration states. Gradients flow through both routes:
the weights (router) and the states (block).

The loop always executes the full iteration budget in lockstep; halting
zeroes a token's later blend weights but its representation keeps evolving
and stays visible to attention (set freeze_halted to pin it instead).
Early-exit compute saving is out of scope.
"""

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .model import add_step_embedding, block_forward, embed_inputs, output_logits


@dataclass
class ActConfig:
    epsilon: float = 0.01            # halt when cumulative p reaches 1 - epsilon
    ponder_lambda: float = 0.0       # ponder-cost coefficient (lambda)
    lambda_warmup_steps: int = 0
    k_run: int = 18                  # iteration budget this run
    act_enabled: bool = True
    ponder_sequence_only: bool = False  # restrict ponder-cost mean to sequence rows
    freeze_halted: bool = False

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 0.1:
            raise ValueError(f"epsilon must be in (0, 0.1], got {self.epsilon}")
        if self.ponder_lambda < 0:
            raise ValueError("ponder_lambda must be >= 0")
        if self.k_run < 1:
            raise ValueError(f"k_run must be >= 1, got {self.k_run}")


@dataclass
class HaltState:
    """Per-token halting record for one forward pass.

    cum_prob accumulates router probabilities while a token runs (its final
    value is sum p over the pre-halt steps); halt_step is 1-based; weights
    stacks the realized blend weights [K, B, S]. remainder keeps the tensor
    alive so the ponder cost can push gradient into the router.
    """

    cum_prob: np.ndarray
    halted: np.ndarray
    halt_step: np.ndarray
    weights: np.ndarray
    remainder: np.ndarray
    remainder_tensor: "T.Tensor"
    mem_tokens: int
    captured_attention: dict = field(default_factory=dict)
    final_state: object = None

    def seq_halt_steps(self):
        return self.halt_step[:, self.mem_tokens:]

    def mean_halt(self):
        """Mean 1-based halting step over sequence tokens."""
        return float(self.seq_halt_steps().mean())

    def mem_mean_halt(self):
        if self.mem_tokens == 0:
            return None
        return float(self.halt_step[:, :self.mem_tokens].mean())


@dataclass
class StepDiagnostics:
    step: int                        # 1-based ponder step
    p_mean: float
    p_min: float
    p_max: float
    frac_halted: float
    mean_weight: float
    quadrants: list = field(default_factory=list)  # per-head dicts, when captured

    def to_record(self):
        rec = {"step": self.step, "p_mean": self.p_mean, "p_min": self.p_min,
               "p_max": self.p_max, "frac_halted": self.frac_halted,
               "mean_weight": self.mean_weight}
        if self.quadrants:
            rec["quadrants"] = self.quadrants
        return rec


def router_prob(h, params):
    """Halting probability per token: sigmoid(w . h + b), shape [B, S]."""
    B, S, _ = h.shape
    logits = T.add(T.matmul(h, params["router_w"]), params["router_b"])
    return T.sigmoid(T.reshape(logits, (B, S)))


def _quadrants_from(attn, mem_tokens):
    from .diagnostics import quadrant_mass
    return quadrant_mass(attn, mem_tokens)


def act_loop(tokens, params, act_cfg, capture_attn_steps=(),
             router_override=None, collect_states=False):
    """Run the ponder loop; returns (blended, halt_state, step_diagnostics).

    router_override: optional sequence of per-step probabilities (float or
    [B, S] array), substituted for the router. Used by the fixed-depth
    equivalence oracle and halting tests.

    capture_attn_steps: 0-based iteration indices at which attention maps are
    captured and folded into the step diagnostics (and returned raw).
    """
    cfg = params.cfg
    K = act_cfg.k_run
    eps = act_cfg.epsilon
    tokens = np.asarray(tokens)
    B = tokens.shape[0]
    S = cfg.tokens_total
    dt = cfg.np_dtype

    x = embed_inputs(tokens, params, step=0)
    halted = np.zeros((B, S), dtype=bool)
    cum_np = np.zeros((B, S), dtype=dt)
    halt_step = np.zeros((B, S), dtype=np.int64)
    weights_np = np.zeros((K, B, S), dtype=dt)
    remainder_np = np.zeros((B, S), dtype=dt)

    cum_t = None          # tensor: sum of p over surviving steps
    remainder_t = None    # tensor: realized remainder at each token's halt
    blended = None
    diags = []
    captured = {}
    h = x
    one = T.Tensor(np.ones((B, S), dtype=dt))

    for k in range(1, K + 1):
        prev = h
        if k > 1 and not cfg.step_emb_first_only:
            h_in = add_step_embedding(h, params, k - 1)
        else:
            h_in = h
        capture = (k - 1) in capture_attn_steps
        h, attn = block_forward(h_in, params, capture=capture)

        running = ~halted
        if act_cfg.freeze_halted and halted.any():
            # tokens already halted keep the representation they halted with
            keep = T.Tensor(running.astype(dt))
            hold = T.Tensor(halted.astype(dt))
            h = T.add(T.rowscale(h, keep), T.rowscale(prev, hold))

        if router_override is not None:
            ov = router_override[k - 1]
            p = T.Tensor(np.broadcast_to(
                np.asarray(ov, dtype=dt), (B, S)).copy())
        else:
            p = router_prob(h, params)
        p_np = p.data

        would = cum_np + p_np
        halts_now = running & ((would >= 1.0 - eps) | (k == K))
        survives = running & ~halts_now

        m_surv = T.Tensor(survives.astype(dt))
        m_halt = T.Tensor(halts_now.astype(dt))
        rem_k = T.sub(one, cum_t) if cum_t is not None else one
        w_k = T.add(T.mul(p, m_surv), T.mul(rem_k, m_halt))

        contrib = T.rowscale(h, w_k)
        blended = contrib if blended is None else T.add(blended, contrib)

        p_surv = T.mul(p, m_surv)
        cum_t = p_surv if cum_t is None else T.add(cum_t, p_surv)
        rem_halt = T.mul(rem_k, m_halt)
        remainder_t = rem_halt if remainder_t is None else T.add(remainder_t, rem_halt)

        cum_np = cum_np + p_np * running  # decision accumulator, monotone
        halt_step[halts_now] = k
        halted |= halts_now
        weights_np[k - 1] = w_k.data
        remainder_np[halts_now] = w_k.data[halts_now]

        diag = StepDiagnostics(
            step=k,
            p_mean=float(p_np.mean()), p_min=float(p_np.min()),
            p_max=float(p_np.max()),
            frac_halted=float(halted.mean()),
            mean_weight=float(w_k.data.mean()),
        )
        if capture and attn is not None:
            diag.quadrants = _quadrants_from(attn, cfg.mem_tokens)
            captured[k - 1] = attn
        diags.append(diag)

    state = HaltState(cum_prob=cum_np, halted=halted, halt_step=halt_step,
                      weights=weights_np, remainder=remainder_np,
                      remainder_tensor=remainder_t, mem_tokens=cfg.mem_tokens,
                      captured_attention=captured,
                      final_state=h if collect_states else None)
    return blended, state, diags


def fixed_depth_forward(tokens, params, k_run, capture_attn_steps=()):
    """Plain weight-tied recurrence: return the final state h_K, no router."""
    if k_run < 1:
        raise ValueError(f"k_run must be >= 1, got {k_run}")
    cfg = params.cfg
    h = embed_inputs(tokens, params, step=0)
    captured = {}
    for k in range(1, k_run + 1):
        if k > 1 and not cfg.step_emb_first_only:
            h = add_step_embedding(h, params, k - 1)
        capture = (k - 1) in capture_attn_steps
        h, attn = block_forward(h, params, capture=capture)
        if capture and attn is not None:
            captured[k - 1] = attn
    return (h, captured) if capture_attn_steps else (h, None)


def ponder_cost(halt_state, sequence_only=False):
    """Mean ponder cost: halting step N plus remainder R, averaged over tokens.

    R here is the remainder 1 - sum(p before halt), i.e. the token's final
    blend weight; a token halting at step 1 with p=1 costs 1 + 1 = 2 under
    this convention.
    """
    n_const = halt_state.halt_step.astype(halt_state.remainder.dtype)
    rem = halt_state.remainder_tensor
    if sequence_only:
        m = halt_state.mem_tokens
        rem = T.slice_axis(rem, 1, m, rem.shape[1])
        n_const = n_const[:, m:]
    rho = T.add(rem, T.Tensor(n_const))
    return T.tmean(rho)


def extended_inference(tokens, params, k_run, act_cfg=None):
    """Run past the trained depth; greedy-decode predictions at every step.

    Halting is ignored for the per-step dumps: predictions at step index k
    (0-based) read out the raw state after k+1 block applications, with the
    step-embedding index wrapping modulo the trained depth. Returns a dict
    with per-step predictions [K_run, B, L], the step-embedding indices
    used, and per-step router probability means (for reference).
    """
    cfg = params.cfg
    if k_run < 1:
        raise ValueError(f"k_run must be >= 1, got {k_run}")
    preds = []
    emb_indices = []
    p_means = []
    with T.no_grad():
        h = embed_inputs(tokens, params, step=0)
        emb_indices.append(0)
        for k in range(1, k_run + 1):
            if k > 1:
                if not cfg.step_emb_first_only:
                    h = add_step_embedding(h, params, k - 1)
                emb_indices.append((k - 1) % cfg.max_ponder)
            h, _ = block_forward(h, params)
            logits = output_logits(h, params)
            preds.append(np.argmax(logits.data, axis=-1))
            p_means.append(float(router_prob(h, params).data.mean()))
    return {
        "predictions": np.stack(preds),          # [K_run, B, L]
        "step_emb_indices": emb_indices,         # index used at each input
        "router_p_mean": p_means,
    }
