"""Sobolev loss, AdamW, and the pretrain / fine-tune loops."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .encodings import StandardStats, fit_stats, standardize, standardize_output
from .fno import Hyperparams, ModelParams, backward, forward, init_params

log = logging.getLogger(__name__)

_AXES = {"range": -1, "depth": -2}


class OptimError(RuntimeError):
    pass


class TrainingDiverged(OptimError):
    def __init__(self, epoch: int, what: str = "loss"):
        super().__init__(f"training diverged at epoch {epoch}: non-finite {what}")
        self.epoch = epoch


# ----------------------------------------------------------- finite differences

def _axis(axis) -> int:
    try:
        return _AXES[axis]
    except KeyError:
        raise OptimError(f"axis must be 'range' or 'depth', got {axis!r}") from None


def _diff1(u, ax):
    d = np.diff(u, axis=ax)
    last = np.take(d, [-1], axis=ax)
    return np.concatenate([d, last], axis=ax)


def _diff1_adjoint(g, ax):
    g = np.moveaxis(g, ax, -1)
    h = g[..., :-1].copy()
    h[..., -1] += g[..., -1]
    out = np.zeros_like(g)
    out[..., 1:] += h
    out[..., :-1] -= h
    return np.moveaxis(out, -1, ax)


def finite_diff(u: np.ndarray, axis: str, order: int = 1) -> np.ndarray:
    """``order``-fold forward difference at unit spacing; the last value is repeated
    so the shape is preserved."""
    ax = _axis(axis)
    if order < 1:
        raise OptimError("order must be >= 1")
    if u.shape[ax] <= order:
        raise OptimError(f"extent {u.shape[ax]} along {axis} too small for order {order}")
    for _ in range(order):
        u = _diff1(u, ax)
    return u


def finite_diff_adjoint(g: np.ndarray, axis: str, order: int = 1) -> np.ndarray:
    ax = _axis(axis)
    for _ in range(order):
        g = _diff1_adjoint(g, ax)
    return g


# -------------------------------------------------------------------- losses

def _sobolev_terms(e, K):
    total = np.sum(e * e, axis=(-2, -1))
    for axis in ("range", "depth"):
        d = e
        for _ in range(K):
            d = _diff1(d, _AXES[axis])
            total = total + np.sum(d * d, axis=(-2, -1))
    return total


def _sobolev_terms_grad(e, K):
    """Gradient of ``_sobolev_terms`` with respect to ``e``."""
    g = 2.0 * e
    for axis in ("range", "depth"):
        ax = _AXES[axis]
        d = e
        for k in range(1, K + 1):
            d = _diff1(d, ax)
            g = g + 2.0 * finite_diff_adjoint(d, axis, k)
    return g


def sobolev_h1_loss(pred: np.ndarray, target: np.ndarray, K: int = 1, with_grad: bool = False):
    """sqrt(L / N) on the last two axes; leading axes are treated as a batch.

    Returns an array of per-field values (a float for a single field) and,
    when asked, the gradient with respect to ``pred``.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise OptimError(f"shape mismatch {pred.shape} vs {target.shape}")
    if K < 0:
        raise OptimError("K must be >= 0")
    if K and min(pred.shape[-2:]) <= K:
        raise OptimError("field too small for the derivative order")
    e = pred - target
    L = _sobolev_terms(e, K)
    Nt = _sobolev_terms(target, K)
    if np.any(Nt <= 0):
        raise OptimError("target has zero Sobolev norm; loss undefined")
    val = np.sqrt(L / Nt)
    if not with_grad:
        return val if val.ndim else float(val)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(val > 0, 1.0 / (2.0 * val * Nt), 0.0)
    grad = _sobolev_terms_grad(e, K) * scale[..., None, None]
    return (val if val.ndim else float(val)), grad


def mse_loss(pred, target, with_grad=False):
    e = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    val = float(np.mean(e * e))
    return (val, 2.0 * e / e.size) if with_grad else val


# ------------------------------------------------------------------- AdamW

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 8
    lr: float = 1e-3
    weight_decay: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    sobolev_order: int = 1
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.lr < 0:
            raise OptimError("lr must be non-negative")
        if not all(0 <= b < 1 for b in self.betas):
            raise OptimError("betas must lie in [0, 1)")
        if self.sobolev_order < 0:
            raise OptimError("sobolev_order must be >= 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise OptimError("batch_size must be >= 1 and epochs >= 0")


def _real_view(a: np.ndarray) -> np.ndarray:
    return a.view(np.float64) if np.iscomplexobj(a) else a


@dataclass
class AdamW:
    """Decoupled-weight-decay Adam; complex tensors are updated on (Re, Im) pairs."""

    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 1e-4
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def from_config(cls, cfg: TrainConfig) -> "AdamW":
        return cls(cfg.lr, tuple(cfg.betas), cfg.eps, cfg.weight_decay)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """Update ``params`` in place."""
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise OptimError(f"non-finite gradient in {name}")
        self.step_count += 1
        b1, b2 = self.betas
        bc1 = 1.0 - b1 ** self.step_count
        bc2 = 1.0 - b2 ** self.step_count
        for name, p in params.items():
            g = _real_view(np.ascontiguousarray(grads[name]))
            theta = _real_view(p)
            if name not in self.m:
                self.m[name] = np.zeros_like(theta)
                self.v[name] = np.zeros_like(theta)
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps) + self.weight_decay * theta
            theta -= self.lr * update


def adamw_step(params, grads, state: AdamW | None = None, cfg: TrainConfig | None = None):
    """Functional form: returns updated copies of ``params`` and the optimizer state."""
    if state is None:
        state = AdamW.from_config(cfg or TrainConfig())
    new = {k: v.copy() for k, v in params.items()}
    state.step(new, grads)
    return new, state


# ------------------------------------------------------------------ training

@dataclass
class Pairs:
    """Raw encoded inputs [S, 4, M, N] and TL targets in dB [S, M, N]."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        if self.inputs.shape[0] != self.targets.shape[0] or self.inputs.shape[-2:] != self.targets.shape[-2:]:
            raise OptimError("inputs and targets disagree in count or grid")

    def __len__(self):
        return self.inputs.shape[0]

    def subset(self, idx) -> "Pairs":
        return Pairs(self.inputs[idx], self.targets[idx])


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    secs: list[float] = field(default_factory=list)
    best_epoch: int = -1
    final: dict = field(default_factory=dict)

    def rows(self):
        for k, (t, v, s) in enumerate(zip(self.train_loss, self.val_loss, self.secs), 1):
            yield {"epoch": k, "train": t, "val": v, "secs": s}


def batch_loss(params: ModelParams, x, y, K: int, with_grad: bool = True):
    """Mean per-sample Sobolev loss on standardized data, with parameter gradients."""
    if not with_grad:
        pred = forward(params, x)[:, 0]
        return float(np.mean(sobolev_h1_loss(pred, y, K)))
    pred, tape = forward(params, x, want_tape=True)
    vals, g = sobolev_h1_loss(pred[:, 0], y, K, with_grad=True)
    grads = backward(params, tape, g[:, None] / len(vals))
    return float(np.mean(vals)), grads


def evaluate_loss(params: ModelParams, data: Pairs, K: int, batch_size: int = 8) -> float:
    if len(data) == 0:
        return float("nan")
    x = standardize(data.inputs, params.stats)
    y = standardize_output(data.targets, params.stats)
    vals = []
    for s in range(0, len(data), batch_size):
        pred = forward(params, x[s:s + batch_size])[:, 0]
        vals.append(np.atleast_1d(sobolev_h1_loss(pred, y[s:s + batch_size], K)))
    return float(np.mean(np.concatenate(vals)))


def train(hp: Hyperparams, cfg: TrainConfig, train_set: Pairs, val_set: Pairs | None = None,
          init: ModelParams | None = None, stats: StandardStats | None = None,
          variant: str = "bty+hf", on_epoch=None) -> tuple[ModelParams, TrainReport]:
    """Mini-batch AdamW on standardized pairs; returns the best-validation parameters."""
    if len(train_set) == 0:
        raise OptimError("empty training set")
    M, N = train_set.inputs.shape[-2:]
    if init is not None:
        params = init.copy()
        if stats is not None:
            params.stats = stats
        elif params.stats is None:
            params.stats = fit_stats(train_set.inputs, train_set.targets)
    else:
        stats = stats or fit_stats(train_set.inputs, train_set.targets)
        params = init_params(hp.clipped_to(M, N), cfg.seed, stats, variant)
    stats = params.stats
    report = TrainReport()
    if cfg.epochs == 0:
        return params, report

    x = standardize(train_set.inputs, stats)
    y = standardize_output(train_set.targets, stats)
    monitor = val_set if val_set is not None and len(val_set) else None
    opt = AdamW.from_config(cfg)
    rng = np.random.default_rng(cfg.seed)
    best, best_val = params.copy(), np.inf
    S = len(train_set)

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(S) if cfg.shuffle else np.arange(S)
        losses = []
        for s in range(0, S, cfg.batch_size):
            idx = np.sort(order[s:s + cfg.batch_size])
            loss, grads = batch_loss(params, x[idx], y[idx], cfg.sobolev_order)
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch)
            try:
                opt.step(params.tensors, grads)
            except OptimError:
                raise TrainingDiverged(epoch, "gradient") from None
            losses.append(loss * len(idx))
        train_loss = float(np.sum(losses) / S)
        val_loss = evaluate_loss(params, monitor, cfg.sobolev_order, cfg.batch_size) if monitor else train_loss
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise TrainingDiverged(epoch)
        secs = time.perf_counter() - t0
        report.train_loss.append(train_loss)
        report.val_loss.append(val_loss)
        report.secs.append(secs)
        if val_loss < best_val:
            best_val, best = val_loss, params.copy()
            report.best_epoch = epoch
        log.info("epoch=%d train=%.6g val=%.6g secs=%.3f", epoch, train_loss, val_loss, secs)
        if on_epoch is not None:
            on_epoch(epoch, train_loss, val_loss, secs)
    report.final = {"best_val": best_val, "best_epoch": report.best_epoch}
    return best, report


def finetune(pretrained: ModelParams, cfg: TrainConfig, small_set: Pairs,
             val_set: Pairs | None = None, on_epoch=None) -> tuple[ModelParams, TrainReport]:
    """Continue training every tensor from ``pretrained``, keeping its standardization."""
    if len(small_set) == 0:
        raise OptimError("empty fine-tuning set")
    if cfg.epochs == 0:
        return pretrained.copy(), TrainReport()
    return train(pretrained.hp, cfg, small_set, val_set, init=pretrained, on_epoch=on_epoch)


def split_indices(n: int, val_frac: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic train/validation split."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_val = int(round(val_frac * n)) if n > 1 else 0
    n_val = min(max(n_val, 1 if val_frac > 0 and n > 1 else 0), n - 1)
    return np.sort(order[n_val:]), np.sort(order[:n_val])
