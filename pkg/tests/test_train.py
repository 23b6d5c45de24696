"""Schedules, optimizer, EMA, loss composition, metrics, overfit smoke."""

import json
import math

import numpy as np
import pytest

from pondergrid import tensor as T
from pondergrid.act import ActConfig, act_loop
from pondergrid.model import ModelConfig, init_params, output_logits
from pondergrid.sudoku import batch_from_puzzles, gen_puzzle
from pondergrid.train import (AdamW, TrainConfig, cosine_lr, ema_update,
                              evaluate, exact_match, lambda_at_step,
                              router_grad_norm, run_training, token_steps,
                              total_loss)


def micro_cfg(**kw):
    base = dict(hidden=32, heads=2, head_dim=16, vocab=6, mem_tokens=2,
                max_ponder=3, seq_len=16, dtype="float64")
    base.update(kw)
    return ModelConfig(**base)


class TestLambdaSchedule:
    def test_step_zero_is_zero(self):
        assert lambda_at_step(0, 0.001, 20000) == 0.0

    def test_warmup_end_reaches_target(self):
        assert lambda_at_step(20000, 0.001, 20000) == pytest.approx(0.001, abs=1e-12)

    def test_linear_midpoint(self):
        assert lambda_at_step(10000, 0.001, 20000) == pytest.approx(0.0005, abs=1e-12)

    def test_no_warmup_is_constant(self):
        assert lambda_at_step(0, 0.001, 0) == 0.001

    def test_negative_step_rejected(self):
        with pytest.raises(ValueError):
            lambda_at_step(-1, 0.001, 100)


class TestCosineSchedule:
    def test_start_is_lr_max(self):
        assert cosine_lr(0, 1000, 3e-4) == pytest.approx(3e-4, abs=1e-12)

    def test_end_is_zero(self):
        assert cosine_lr(1000, 1000, 3e-4) == pytest.approx(0.0, abs=1e-12)

    def test_midpoint_is_half(self):
        assert cosine_lr(500, 1000, 3e-4) == pytest.approx(1.5e-4, abs=1e-12)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            cosine_lr(1001, 1000, 3e-4)

    def test_constant_schedule_config(self):
        cfg = TrainConfig(lr_schedule="constant")
        assert cfg.lr_schedule == "constant"
        with pytest.raises(ValueError, match="lr_schedule"):
            TrainConfig(lr_schedule="linear")


class TestAdamW:
    def make(self, value=0.5, wd=0.0):
        cfg = micro_cfg()
        params = init_params(cfg, seed=0)
        return params

    def test_zero_grad_zero_decay_no_change(self):
        params = self.make()
        before = params.clone_arrays()
        opt = AdamW(params, weight_decay=0.0)
        params.zero_grad()
        opt.step(params, lr=1e-3)
        for name, t in params.items():
            np.testing.assert_array_equal(t.data, before[name])

    def test_single_step_matches_hand_computation(self):
        # scalar parameter, constant gradient: one bias-corrected Adam step
        lr, b1, b2, eps, g0 = 0.01, 0.9, 0.999, 1e-8, 0.3
        mhat = g0                      # (1-b1)*g / (1-b1)
        vhat = g0 * g0                 # (1-b2)*g^2 / (1-b2)
        expected_update = -lr * mhat / (math.sqrt(vhat) + eps)

        cfg = micro_cfg()
        params = init_params(cfg, seed=0)
        theta0 = params["router_b"].data.copy()
        params.zero_grad()
        params["router_b"].grad = np.array([g0], dtype=np.float64)
        opt = AdamW(params, beta1=b1, beta2=b2, eps=eps, weight_decay=0.0)
        opt.step(params, lr=lr)
        got = params["router_b"].data - theta0
        np.testing.assert_allclose(got, expected_update, rtol=1e-10)

    def test_decay_decoupled_from_gradient(self):
        params = self.make()
        wd, lr = 0.1, 1e-2
        before = params["attn_wq"].data.copy()
        opt = AdamW(params, weight_decay=wd)
        params.zero_grad()  # no gradients at all
        opt.step(params, lr=lr)
        np.testing.assert_allclose(params["attn_wq"].data,
                                   before - lr * wd * before, rtol=1e-7)

    def test_grad_clip_global_norm(self):
        params = self.make()
        for _, t in params.items():
            t.grad = np.full_like(t.data, 10.0)
        total = math.sqrt(sum(float((t.grad ** 2).sum()) for _, t in params.items()))
        opt = AdamW(params, weight_decay=0.0)
        opt.step(params, lr=1e-3, grad_clip=total / 2)  # forces scaling


class TestEma:
    def test_decay_zero_copies_params(self):
        cfg = micro_cfg()
        params = init_params(cfg, seed=0)
        ema = {n: np.zeros_like(a) for n, a in params.clone_arrays().items()}
        ema_update(ema, params, decay=0.0)
        for name, t in params.items():
            np.testing.assert_array_equal(ema[name], t.data)

    def test_decay_one_freezes_ema(self):
        cfg = micro_cfg()
        params = init_params(cfg, seed=0)
        ema = {n: np.full_like(a, 7.0) for n, a in params.clone_arrays().items()}
        ema_update(ema, params, decay=1.0)
        for name in ema:
            np.testing.assert_array_equal(ema[name], 7.0)

    def test_fixed_point_at_constant_params(self):
        cfg = micro_cfg()
        params = init_params(cfg, seed=0)
        ema = params.clone_arrays()
        for _ in range(5):
            ema_update(ema, params, decay=0.9)
        for name, t in params.items():
            np.testing.assert_allclose(ema[name], t.data, rtol=1e-12)

    def test_geometric_convergence_when_frozen(self):
        # |ema_n - p| = decay^n |ema_0 - p| exactly
        cfg = micro_cfg()
        params = init_params(cfg, seed=0)
        ema = {n: a + 1.0 for n, a in params.clone_arrays().items()}
        decay, n = 0.9, 12
        for _ in range(n):
            ema_update(ema, params, decay=decay)
        for name, t in params.items():
            np.testing.assert_allclose(ema[name] - t.data, decay ** n,
                                       rtol=1e-9)


class TestLossAndMetrics:
    def test_uniform_logits_ce_is_log_vocab(self):
        logits = T.tensor(np.zeros((2, 81, 11)))
        targets = np.ones((2, 81), dtype=int)
        loss = total_loss(logits, targets, None, 0.0)
        assert float(loss.data) == pytest.approx(math.log(11), abs=1e-9)

    def test_perfect_logits_leave_only_ponder_term(self, rng):
        cfg = micro_cfg()
        params = init_params(cfg, seed=0)
        toks = rng.integers(0, cfg.vocab - 1, size=(2, cfg.seq_len))
        blended, hs, _ = act_loop(toks, params, ActConfig(k_run=3))
        targets = rng.integers(1, 5, size=(2, cfg.seq_len))
        onehot = np.full((2, cfg.seq_len, cfg.vocab), -1e4)
        for b in range(2):
            onehot[b, np.arange(cfg.seq_len), targets[b]] = 1e4
        lam_t = 0.01
        loss = total_loss(T.tensor(onehot), targets, hs, lam_t)
        from pondergrid.act import ponder_cost
        rho = float(ponder_cost(hs).data)
        assert float(loss.data) == pytest.approx(lam_t * rho, abs=1e-6)

    def test_lambda_zero_is_pure_ce(self, rng):
        cfg = micro_cfg()
        params = init_params(cfg, seed=0)
        toks = rng.integers(0, cfg.vocab - 1, size=(2, cfg.seq_len))
        blended, hs, _ = act_loop(toks, params, ActConfig(k_run=3))
        logits = output_logits(blended, params)
        targets = rng.integers(1, 5, size=(2, cfg.seq_len))
        a = total_loss(logits, targets, hs, 0.0)
        b = T.tmean(T.cross_entropy_logits(logits, targets))
        assert float(a.data) == pytest.approx(float(b.data))

    def test_target_out_of_range_rejected(self):
        logits = T.tensor(np.zeros((1, 4, 6)))
        with pytest.raises(ValueError, match="target id"):
            total_loss(logits, np.full((1, 4), 6), None, 0.0)

    def test_exact_match_counts_whole_puzzles(self):
        targets = np.array([[1, 2], [3, 4]])
        assert exact_match(targets, targets) == 1.0
        wrong = targets.copy()
        wrong[0, 0] = 9
        assert exact_match(wrong, targets) == 0.5

    def test_token_steps_table_arithmetic(self):
        # (T + 81) x mean halt, rounded, reproduces the reported column
        assert token_steps(8, 81, 11.60) == 1032
        assert token_steps(16, 81, 11.50) == 1116
        assert token_steps(32, 81, 10.29) == 1163
        assert token_steps(64, 81, 8.25) == 1196


class TestRouterGradNorm:
    def test_zero_grads_give_zero(self):
        params = init_params(micro_cfg(), seed=0)
        params.zero_grad()
        assert router_grad_norm(params) == 0.0

    def test_matches_finite_difference(self, rng):
        # d loss / d router_b via central differences on the full forward
        cfg = micro_cfg()
        params = init_params(cfg, seed=1)
        toks = rng.integers(0, cfg.vocab - 1, size=(2, cfg.seq_len))
        targets = rng.integers(1, 5, size=(2, cfg.seq_len))

        def loss_value():
            blended, hs, _ = act_loop(toks, params, ActConfig(k_run=3))
            logits = output_logits(blended, params)
            return float(total_loss(logits, targets, hs, 0.01).data)

        params.zero_grad()
        blended, hs, _ = act_loop(toks, params, ActConfig(k_run=3))
        logits = output_logits(blended, params)
        total_loss(logits, targets, hs, 0.01).backward()
        ad = params["router_b"].grad.copy()

        from oracles import finite_difference_grad, relative_error
        _, fd = finite_difference_grad(loss_value, params["router_b"].data,
                                       eps=1e-6)
        assert relative_error(ad, fd).max() <= 1e-3


class TestTrainingLoop:
    def make_data(self, n):
        return [gen_puzzle(s, n=4, n_givens_range=(6, 10)) for s in range(n)]

    def test_overfit_50_samples_to_tiny_ce(self):
        # full-pipeline smoke: CE on a fixed 50-puzzle batch drops below
        # 0.01 well within the 2k-step budget
        cfg = micro_cfg(dtype="float32")
        params = init_params(cfg, seed=0)
        puzzles = self.make_data(50)
        batch = batch_from_puzzles(puzzles)
        act_cfg = ActConfig(k_run=3)
        opt = AdamW(params, weight_decay=0.0)
        ce = None
        for step in range(2000):
            params.zero_grad()
            blended, hs, _ = act_loop(batch.tokens, params, act_cfg)
            logits = output_logits(blended, params)
            loss = total_loss(logits, batch.targets, hs, 0.0)
            loss.backward()
            opt.step(params, lr=3e-3)
            ce = float(loss.data)
            if ce < 0.01:
                break
        assert ce < 0.01, f"stuck at CE {ce:.4f}"

    def test_run_training_writes_metrics_schema(self, tmp_path):
        cfg = micro_cfg(dtype="float64")
        params = init_params(cfg, seed=0)
        train = self.make_data(24)
        evalp = self.make_data(8)
        tc = TrainConfig(lr_max=1e-3, batch_size=8, max_steps=6, eval_every=3,
                         seed=0, weight_decay=0.0)
        ac = ActConfig(k_run=3)
        run_dir = tmp_path / "run"
        summary = run_training(params, train, evalp, tc, ac,
                               run_dir=str(run_dir), log=None)
        lines = (run_dir / "metrics.jsonl").read_text().splitlines()
        assert len(lines) == 2
        rec = json.loads(lines[0])
        assert list(rec.keys()) == ["step", "samples_seen", "lr", "lambda_t",
                                    "train_loss", "eval_em", "mean_halt",
                                    "halt_min", "halt_max", "router_grad_norm"]
        assert rec["samples_seen"] == rec["step"] * 8
        assert (run_dir / "checkpoints" / "last.ckpt").exists()
        assert (run_dir / "checkpoints" / "ema.ckpt").exists()
        assert summary["final"]["step"] == 6

    def test_determinism_float64(self, tmp_path):
        results = []
        train = self.make_data(16)
        evalp = self.make_data(8)
        for run in range(2):
            cfg = micro_cfg(dtype="float64")
            params = init_params(cfg, seed=9)
            tc = TrainConfig(lr_max=1e-3, batch_size=8, max_steps=4,
                             eval_every=2, seed=9, weight_decay=0.01)
            run_dir = tmp_path / f"run{run}"
            run_training(params, train, evalp, tc, ActConfig(k_run=3),
                         run_dir=str(run_dir), log=None)
            results.append((run_dir / "metrics.jsonl").read_text())
        assert results[0] == results[1]

    def test_constant_lr_run_keeps_lr_max(self, tmp_path):
        cfg = micro_cfg(dtype="float64")
        params = init_params(cfg, seed=0)
        tc = TrainConfig(lr_max=2e-3, batch_size=8, max_steps=4, eval_every=2,
                         seed=0, lr_schedule="constant")
        summary = run_training(params, self.make_data(8), self.make_data(4),
                               tc, ActConfig(k_run=3), log=None)
        assert summary["final"]["lr"] == 2e-3

    def test_fixed_depth_mode_reports_k(self, tmp_path):
        cfg = micro_cfg(dtype="float64", act_enabled=False)
        params = init_params(cfg, seed=0)
        tc = TrainConfig(lr_max=1e-3, batch_size=8, max_steps=2, eval_every=2,
                         seed=0)
        ac = ActConfig(k_run=3, act_enabled=False)
        summary = run_training(params, self.make_data(8), self.make_data(4),
                               tc, ac, run_dir=str(tmp_path / "fd"), log=None)
        assert summary["final"]["mean_halt"] == 3.0

    def test_diagnostics_hook_pure_observation(self, tmp_path):
        train = self.make_data(16)
        evalp = self.make_data(4)
        losses = {}
        for tag, hook in (("off", None),
                          ("on", lambda s, p, hs, d: None)):
            cfg = micro_cfg(dtype="float64")
            params = init_params(cfg, seed=4)
            tc = TrainConfig(lr_max=1e-3, batch_size=8, max_steps=3,
                             eval_every=3, seed=4)
            summary = run_training(params, train, evalp, tc, ActConfig(k_run=3),
                                   diagnostics_hook=hook, log=None)
            losses[tag] = summary["final"]["train_loss"]
        assert losses["on"] == losses["off"]
