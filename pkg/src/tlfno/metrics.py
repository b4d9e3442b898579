"""RMSE, H1 Sobolev error and SSIM for TL charts."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import correlate

from .optim import sobolev_h1_loss

C1 = 1e-4
C2 = 9e-4
WINDOW = 11
SIGMA = 1.5


class MetricError(ValueError):
    pass


def _pair(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise MetricError(f"shape mismatch {pred.shape} vs {target.shape}")
    return pred, target


def rmse(pred, target) -> float:
    pred, target = _pair(pred, target)
    return float(np.sqrt(np.mean((pred - target) ** 2)))


def h1_error(pred, target) -> float:
    pred, target = _pair(pred, target)
    return sobolev_h1_loss(pred, target, K=1)


def gaussian_window(size: int = WINDOW, sigma: float = SIGMA) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def joint_minmax(a, b):
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi == lo:
        return None
    return (a - lo) / (hi - lo), (b - lo) / (hi - lo)


def ssim_map(x, y, window=None):
    """Local SSIM over Gaussian windows with edge replication."""
    w = gaussian_window() if window is None else window
    f = lambda a: correlate(a, w, mode="nearest")  # noqa: E731
    mx, my = f(x), f(y)
    sxx = f(x * x) - mx * mx
    syy = f(y * y) - my * my
    sxy = f(x * y) - mx * my
    return ((2 * mx * my + C1) * (2 * sxy + C2)) / ((mx * mx + my * my + C1) * (sxx + syy + C2))


def ssim(pred, target) -> float:
    """Windowed SSIM after jointly rescaling both fields to [0, 1]."""
    pred, target = _pair(pred, target)
    scaled = joint_minmax(pred, target)
    if scaled is None:
        return 1.0
    val = float(np.mean(ssim_map(*scaled)))
    # the index is bounded by 1; rounding in the local moments can overshoot by an ulp
    return min(val, 1.0)


def ssim_global(pred, target) -> float:
    """Single-window SSIM over the whole (jointly normalised) field."""
    pred, target = _pair(pred, target)
    scaled = joint_minmax(pred, target)
    if scaled is None:
        return 1.0
    x, y = scaled
    mx, my = x.mean(), y.mean()
    sxy = np.mean((x - mx) * (y - my))
    val = ((2 * mx * my + C1) * (2 * sxy + C2)) / ((mx**2 + my**2 + C1) * (x.var() + y.var() + C2))
    return min(float(val), 1.0)


@dataclass(frozen=True)
class MetricReport:
    rmse: float
    h1: float
    ssim: float

    def to_json(self, **extra) -> str:
        return json.dumps({**extra, **asdict(self)})


def evaluate(pred, target) -> MetricReport:
    return MetricReport(rmse(pred, target), h1_error(pred, target), ssim(pred, target))


def aggregate(reports: list[MetricReport]) -> MetricReport:
    if not reports:
        raise MetricError("nothing to aggregate")
    return MetricReport(*(float(np.mean([getattr(r, k) for r in reports])) for k in ("rmse", "h1", "ssim")))
