"""The shared transformer block and every embedding that feeds it.

One block's weights exist, period; the ponder loop applies the same Tensor
objects at every iteration. Memory tokens are a learned [T, hidden] bank
prepended to the sequence; they are sample-independent, get their own type
embedding, and occupy rotary positions 0..T-1 while sequence cells continue
at T..T+L-1. The per-iteration step embedding is added to all rows and is
the only input signal that changes across iterations; its table has exactly
max_ponder rows and indices always reduce modulo that, which is what lets
inference run past the trained depth.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T


def ffn_width(hidden):
    # 8/3 expansion, rounded to the nearest multiple of 8
    return int(round(hidden * 8.0 / 3.0 / 8.0)) * 8


@dataclass
class ModelConfig:
    hidden: int = 512
    heads: int = 8
    head_dim: int = 64
    vocab: int = 11
    mem_tokens: int = 16
    max_ponder: int = 18
    seq_len: int = 81
    norm_kind: str = "derf"          # "derf" | "rms"
    router_bias_init: float = -3.0
    act_enabled: bool = True
    rope_theta: float = 10000.0
    rope_before_qk_norm: bool = False  # alternative ordering, off by default
    step_emb_first_only: bool = False  # ablation: step signal only at iteration 0
    rms_eps: float = 1e-6
    dtype: str = "float32"           # "float64" for gradient verification

    def __post_init__(self):
        if self.hidden != self.heads * self.head_dim:
            raise ValueError(
                f"hidden ({self.hidden}) must equal heads*head_dim "
                f"({self.heads}x{self.head_dim})")
        if self.mem_tokens < 0:
            raise ValueError("mem_tokens must be >= 0")
        if self.max_ponder < 1:
            raise ValueError("max_ponder must be >= 1")
        if self.norm_kind not in ("derf", "rms"):
            raise ValueError(f"norm_kind must be derf|rms, got {self.norm_kind!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32|float64, got {self.dtype!r}")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    @property
    def tokens_total(self):
        return self.mem_tokens + self.seq_len

    def with_(self, **kw):
        return replace(self, **kw)


# Parameter names in creation order; conditionals noted.
_PARAM_ORDER = [
    "tok_emb", "type_emb", "step_emb", "mem_bank",
    "attn_wq", "attn_wk", "attn_wv", "attn_wo", "q_gain", "k_gain",
    "norm1_alpha", "norm1_shift", "norm2_alpha", "norm2_shift",   # derf
    "norm1_gain", "norm2_gain",                                   # rms
    "ffn_gate", "ffn_up", "ffn_down",
    "router_w", "router_b", "out_proj",
]


@dataclass
class ModelParams:
    """Named parameter tensors, all trainable leaves."""

    cfg: ModelConfig
    tensors: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.tensors[name]

    def items(self):
        return self.tensors.items()

    def names(self):
        return list(self.tensors.keys())

    def zero_grad(self):
        for t in self.tensors.values():
            t.zero_grad()

    def n_params(self):
        return sum(t.size for t in self.tensors.values())

    def count_by_group(self):
        return {name: t.size for name, t in self.tensors.items()}

    def state_dict(self):
        return {name: t.data for name, t in self.tensors.items()}

    def load_state(self, arrays):
        for name, t in self.tensors.items():
            if name not in arrays:
                raise KeyError(f"checkpoint missing parameter {name}")
            if arrays[name].shape != t.data.shape:
                raise ValueError(
                    f"checkpoint shape mismatch for {name}: "
                    f"{arrays[name].shape} vs {t.data.shape}")
            t.data[...] = arrays[name].astype(t.data.dtype)

    def clone_arrays(self):
        return {name: t.data.copy() for name, t in self.tensors.items()}


def init_params(cfg, seed=0):
    """Fresh parameters; draw order is fixed so a seed pins every weight."""
    rng = np.random.default_rng(seed)
    dt = cfg.np_dtype
    dff = ffn_width(cfg.hidden)
    H = cfg.hidden

    def normal(*shape):
        return rng.normal(0.0, 0.02, size=shape).astype(dt)

    spec = {
        "tok_emb": normal(cfg.vocab, H),
        "type_emb": normal(2, H),
        "step_emb": normal(cfg.max_ponder, H),
        "mem_bank": normal(cfg.mem_tokens, H),
        "attn_wq": normal(H, H),
        "attn_wk": normal(H, H),
        "attn_wv": normal(H, H),
        "attn_wo": normal(H, H),
        "q_gain": np.ones(cfg.heads, dtype=dt),
        "k_gain": np.ones(cfg.heads, dtype=dt),
    }
    if cfg.norm_kind == "derf":
        spec.update({
            "norm1_alpha": np.ones(H, dtype=dt),
            "norm1_shift": np.zeros(H, dtype=dt),
            "norm2_alpha": np.ones(H, dtype=dt),
            "norm2_shift": np.zeros(H, dtype=dt),
        })
    else:
        spec.update({
            "norm1_gain": np.ones(H, dtype=dt),
            "norm2_gain": np.ones(H, dtype=dt),
        })
    spec.update({
        "ffn_gate": normal(H, dff),
        "ffn_up": normal(H, dff),
        "ffn_down": normal(dff, H),
        "router_w": normal(H, 1),
        "router_b": np.full(1, cfg.router_bias_init, dtype=dt),
        "out_proj": normal(H, cfg.vocab),
    })
    tensors = {name: T.Tensor(spec[name], requires_grad=True, name=name)
               for name in _PARAM_ORDER if name in spec}
    return ModelParams(cfg=cfg, tensors=tensors)


# ---------------------------------------------------------------------------
# rotary tables

_rope_cache = {}


def rope_tables(n_positions, head_dim, theta, np_dtype):
    key = (n_positions, head_dim, float(theta), np.dtype(np_dtype).str)
    hit = _rope_cache.get(key)
    if hit is None:
        half = head_dim // 2
        inv = theta ** (-np.arange(half, dtype=np.float64) * 2.0 / head_dim)
        ang = np.arange(n_positions, dtype=np.float64)[:, None] * inv[None, :]
        hit = (np.cos(ang).astype(np_dtype), np.sin(ang).astype(np_dtype))
        _rope_cache[key] = hit
    return hit


# ---------------------------------------------------------------------------
# forward pieces


def embed_inputs(tokens, params, step):
    """Initial state for one iteration: [B, T+L, hidden].

    tokens: [B, L] int grid encoding. Memory rows come first and carry
    bank + memory-type + step embedding; sequence rows carry token +
    sequence-type + step embedding. `step` may exceed max_ponder; it wraps.
    """
    cfg = params.cfg
    tokens = np.asarray(tokens)
    if tokens.ndim != 2 or tokens.shape[1] != cfg.seq_len:
        raise T.ShapeError(
            f"embed_inputs: tokens must be [B, {cfg.seq_len}], got {tokens.shape}")
    if tokens.size and (tokens.min() < 0 or tokens.max() >= cfg.vocab):
        raise ValueError(
            f"embed_inputs: token id out of range [0, {cfg.vocab}), "
            f"got max {tokens.max()}")
    B = tokens.shape[0]
    Tm = cfg.mem_tokens

    seq = T.gather_rows(params["tok_emb"], tokens)                       # [B,L,H]
    seq_type = T.reshape(T.slice_axis(params["type_emb"], 0, 1, 2), (cfg.hidden,))
    seq = T.add(seq, seq_type)

    if Tm > 0:
        mem_ids = np.broadcast_to(np.arange(Tm), (B, Tm))
        mem = T.gather_rows(params["mem_bank"], mem_ids)                 # [B,T,H]
        mem_type = T.reshape(T.slice_axis(params["type_emb"], 0, 0, 1), (cfg.hidden,))
        mem = T.add(mem, mem_type)
        x = T.concat([mem, seq], axis=1)
    else:
        x = seq
    return add_step_embedding(x, params, step)


def add_step_embedding(x, params, step):
    """Add the per-iteration signal to every row; index wraps mod max_ponder."""
    cfg = params.cfg
    k = int(step) % cfg.max_ponder
    row = T.reshape(T.slice_axis(params["step_emb"], 0, k, k + 1), (cfg.hidden,))
    return T.add(x, row)


def step_emb_index(step, max_ponder):
    return int(step) % max_ponder


def apply_norm(x, params, which):
    """Pre-block normalizer: bounded erf(alpha*x + shift), or RMS with gain."""
    cfg = params.cfg
    if cfg.norm_kind == "derf":
        z = T.scale_axis(x, params[f"{which}_alpha"], axis=-1)
        z = T.add(z, params[f"{which}_shift"])
        return T.erf(z)
    z = T.rms_norm(x, eps=cfg.rms_eps)
    return T.scale_axis(z, params[f"{which}_gain"], axis=-1)


def attention(x, params, capture=False):
    """Bidirectional multi-head attention over all memory+sequence rows.

    x: [B, S, hidden], already normalized. QK RMS-normalization (learned
    per-head gain) is applied before the rotary map by default. Returns
    (output tensor, per-head weights as a detached [B, heads, S, S] array
    or None).
    """
    cfg = params.cfg
    B, S, H = x.shape
    nh, hd = cfg.heads, cfg.head_dim

    def split_heads(t):
        return T.transpose(T.reshape(t, (B, S, nh, hd)), (0, 2, 1, 3))

    q = split_heads(T.matmul(x, params["attn_wq"]))
    k = split_heads(T.matmul(x, params["attn_wk"]))
    v = split_heads(T.matmul(x, params["attn_wv"]))

    cos, sin = rope_tables(S, hd, cfg.rope_theta, cfg.np_dtype)

    def qk_prep(t, gain):
        if cfg.rope_before_qk_norm:
            t = T.rope(t, cos, sin)
            t = T.scale_axis(T.rms_norm(t, eps=cfg.rms_eps), gain, axis=1)
        else:
            t = T.scale_axis(T.rms_norm(t, eps=cfg.rms_eps), gain, axis=1)
            t = T.rope(t, cos, sin)
        return t

    q = qk_prep(q, params["q_gain"])
    k = qk_prep(k, params["k_gain"])

    scores = T.mul(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(hd))
    w = T.softmax(scores, axis=-1)
    attn_weights = w.data.copy() if capture else None

    out = T.matmul(w, v)                                  # [B,nh,S,hd]
    out = T.reshape(T.transpose(out, (0, 2, 1, 3)), (B, S, H))
    return T.matmul(out, params["attn_wo"]), attn_weights


def block_forward(x, params, capture=False):
    """One application of the shared block: pre-norm attention, then SwiGLU."""
    a, attn_weights = attention(apply_norm(x, params, "norm1"), params,
                                capture=capture)
    h = T.add(x, a)
    f = apply_norm(h, params, "norm2")
    gate = T.silu(T.matmul(f, params["ffn_gate"]))
    up = T.matmul(f, params["ffn_up"])
    ffn = T.matmul(T.mul(gate, up), params["ffn_down"])
    return T.add(h, ffn), attn_weights


def output_logits(h, params):
    """Project sequence rows to vocabulary logits: [B, L, vocab].

    Memory rows are dropped; they never produce predictions.
    """
    cfg = params.cfg
    seq = T.slice_axis(h, 1, cfg.mem_tokens, cfg.mem_tokens + cfg.seq_len)
    return T.matmul(seq, params["out_proj"])
