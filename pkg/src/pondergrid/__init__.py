"""pondergrid: a single-block weight-tied transformer with a learned memory
bank and per-token adaptive compute, built on an in-package autodiff core,
trained and probed on Sudoku grids."""

from .act import ActConfig, HaltState, StepDiagnostics, act_loop, \
    extended_inference, fixed_depth_forward, ponder_cost, router_prob
from .kernels import BACKEND
from .model import ModelConfig, ModelParams, block_forward, embed_inputs, \
    ffn_width, init_params, output_logits
from .sudoku import Puzzle, PuzzleBatch, augment, gen_puzzle, load_csv, \
    solve_backtracking
from .tensor import Tensor, ShapeError, no_grad
from .train import TrainConfig, cosine_lr, exact_match, lambda_at_step, \
    run_training, token_steps, total_loss

__version__ = "0.1.0"

__all__ = [
    "ActConfig", "HaltState", "StepDiagnostics", "act_loop",
    "extended_inference", "fixed_depth_forward", "ponder_cost", "router_prob",
    "BACKEND", "ModelConfig", "ModelParams", "block_forward", "embed_inputs",
    "ffn_width", "init_params", "output_logits", "Puzzle", "PuzzleBatch",
    "augment", "gen_puzzle", "load_csv", "solve_backtracking", "Tensor",
    "ShapeError", "no_grad", "TrainConfig", "cosine_lr", "exact_match",
    "lambda_at_step", "run_training", "token_steps", "total_loss",
    "__version__",
]
