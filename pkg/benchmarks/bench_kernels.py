#!/usr/bin/env python3
"""Compare the compiled kernels against the NumPy fallback.

Times each kernel on model-shaped arrays, then a full training step under
each backend. The compiled side wins on the fused rowwise chains (RMS
backward, cross entropy, embedding scatter); BLAS-bound matmuls are shared
by both backends so the end-to-end gap is narrower than the per-kernel one.

Run:  python benchmarks/bench_kernels.py [--steps 5]
"""

import argparse
import time

import numpy as np

from pondergrid.kernels import _pykernels

try:
    from pondergrid.kernels import _ckernels
except ImportError:
    _ckernels = None


def timeit(fn, *args, repeat=20):
    fn(*args)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat * 1000.0


def bench_kernels(dtype=np.float32):
    rng = np.random.default_rng(0)
    rows, hidden, dff, vocab = 2560, 128, 344, 6
    x = rng.normal(size=(rows, hidden)).astype(dtype)
    g = rng.normal(size=(rows, hidden)).astype(dtype)
    xf = rng.normal(size=(rows, dff)).astype(dtype)
    gf = rng.normal(size=(rows, dff)).astype(dtype)
    logits = rng.normal(size=(rows, vocab)).astype(dtype)
    targets = rng.integers(0, vocab, size=rows).astype(np.int64)
    rinv = _pykernels.rmsnorm_fwd(x, 1e-6)[1]
    sig = _pykernels.sigmoid_fwd(x)
    p = rng.normal(size=(hidden, dff)).astype(dtype)
    pm = np.zeros_like(p)
    pv = np.zeros_like(p)
    ids = rng.integers(0, vocab, size=rows).astype(np.int64)
    src = rng.normal(size=(rows, hidden)).astype(dtype)
    table = np.zeros((vocab, hidden), dtype=dtype)

    cases = [
        ("erf_fwd", lambda k: k.erf_fwd(x.reshape(-1))),
        ("erf_bwd", lambda k: k.erf_bwd(x.reshape(-1), g.reshape(-1))),
        ("sigmoid_fwd", lambda k: k.sigmoid_fwd(x.reshape(-1))),
        ("sigmoid_bwd", lambda k: k.sigmoid_bwd(sig.reshape(-1), g.reshape(-1))),
        ("silu_fwd", lambda k: k.silu_fwd(xf.reshape(-1))),
        ("silu_bwd", lambda k: k.silu_bwd(xf.reshape(-1), gf.reshape(-1))),
        ("softmax_fwd", lambda k: k.softmax_fwd(x)),
        ("softmax_bwd", lambda k: k.softmax_bwd(x, g)),
        ("rmsnorm_fwd", lambda k: k.rmsnorm_fwd(x, 1e-6)),
        ("rmsnorm_bwd", lambda k: k.rmsnorm_bwd(x, rinv, g)),
        ("cross_entropy", lambda k: k.cross_entropy_fwd(logits, targets)),
        ("scatter_add", lambda k: k.scatter_add_rows(table, ids, src)),
        ("adamw", lambda k: k.adamw_update(
            p.reshape(-1), p.reshape(-1), pm.reshape(-1), pv.reshape(-1),
            1e-3, 0.9, 0.999, 1e-8, 0.01, 0.1, 0.001)),
    ]
    name = np.dtype(dtype).name
    print(f"\nper-kernel, {name}, model-shaped arrays (ms)")
    print(f"{'kernel':14s} {'numpy':>8s} {'compiled':>9s} {'speedup':>8s}")
    for label, call in cases:
        t_py = timeit(call, _pykernels)
        if _ckernels is None:
            print(f"{label:14s} {t_py:8.3f} {'-':>9s} {'-':>8s}")
            continue
        # pykernels erf/sigmoid/silu take any shape; compiled ones are flat,
        # so the lambdas above already pass flattened views
        t_ck = timeit(call, _ckernels)
        print(f"{label:14s} {t_py:8.3f} {t_ck:9.3f} {t_py / t_ck:7.2f}x")


def bench_train_step(steps, pairs=3):
    """End-to-end step time per backend, interleaved subprocess pairs.

    Alternating the backends and taking medians cancels the slow drift of
    shared/virtualized hosts, which otherwise swamps the real difference
    (matrix products dominate the step and go to the same BLAS in both).
    """
    import os
    import statistics
    import subprocess
    import sys

    code = r"""
import time
import numpy as np
from pondergrid.kernels import BACKEND
from pondergrid.model import ModelConfig, init_params, output_logits
from pondergrid.act import ActConfig, act_loop
from pondergrid.train import AdamW, total_loss
from pondergrid.sudoku import gen_puzzle, batch_from_puzzles

cfg = ModelConfig(hidden=128, heads=4, head_dim=32, vocab=6, mem_tokens=4,
                  max_ponder=8, seq_len=16)
params = init_params(cfg, seed=0)
batch = batch_from_puzzles([gen_puzzle(s, n=4) for s in range(128)])
opt = AdamW(params)

def step():
    params.zero_grad()
    blended, hs, _ = act_loop(batch.tokens, params, ActConfig(k_run=8))
    loss = total_loss(output_logits(blended, params), batch.targets, hs, 0.0)
    loss.backward()
    opt.step(params, lr=1e-3)

step(); step()
t0 = time.perf_counter()
for _ in range(%d):
    step()
dt = (time.perf_counter() - t0) / %d
print(f"{dt*1000:.1f}")
""" % (steps, steps)
    print("\nfull training step (hidden=128, K=8, batch=128), "
          f"median of {pairs} interleaved trials")
    samples = {"python": [], "compiled": []}
    for _ in range(pairs):
        for backend in ("python", "compiled"):
            env = dict(os.environ, PONDERGRID_KERNELS=backend)
            try:
                out = subprocess.run([sys.executable, "-c", code], env=env,
                                     capture_output=True, text=True, check=True)
                samples[backend].append(float(out.stdout.strip()))
            except subprocess.CalledProcessError as exc:
                print(f"  {backend}: unavailable "
                      f"({exc.stderr.strip().splitlines()[-1]})")
                samples[backend].append(float("nan"))
    for backend, vals in samples.items():
        good = [v for v in vals if v == v]
        if good:
            print(f"  {backend}: {statistics.median(good):.0f} ms/step "
                  f"(trials: {', '.join(f'{v:.0f}' for v in good)})")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=5,
                    help="training steps to average in the end-to-end bench")
    ap.add_argument("--skip-train", action="store_true")
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled kernels not built; showing NumPy fallback only")
    bench_kernels(np.float32)
    bench_kernels(np.float64)
    if not args.skip_train:
        bench_train_step(args.steps)
