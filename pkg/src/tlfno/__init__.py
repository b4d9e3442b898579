"""Physics-encoded Fourier neural operator surrogate for ocean transmission loss."""
from .encodings import VARIANTS, StandardStats, assemble_input
from .fno import Hyperparams, ModelParams, count_params, forward, init_params, predict
from .grid import Grid2D, Scenario, SoundSpeedField, SynthConfig, build_grid, synth_environment
from .kernels import BACKEND
from .metrics import evaluate, h1_error, rmse, ssim
from .optim import TrainConfig, finetune, sobolev_h1_loss, train
from .pe import PEConfig, solve_pe, solve_tl
from .persist import load_checkpoint, load_dataset, save_checkpoint, save_dataset

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "VARIANTS", "Grid2D", "Hyperparams", "ModelParams", "PEConfig", "Scenario",
    "SoundSpeedField", "StandardStats", "SynthConfig", "TrainConfig", "assemble_input", "build_grid",
    "count_params", "evaluate", "finetune", "forward", "h1_error", "init_params", "load_checkpoint",
    "load_dataset", "predict", "rmse", "save_checkpoint", "save_dataset", "sobolev_h1_loss", "solve_pe",
    "solve_tl", "ssim", "synth_environment", "train",
]
