"""Physics-encoded model inputs and dataset standardization.

Channel layout is fixed: ``[hankel amplitude, sound speed with bathymetry,
range position, depth position]``. Ablation variants keep four channels and
substitute the raw sound speed for any disabled encoding.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid2D, Scenario, SoundSpeedField

VARIANTS = ("bty+hf", "bty", "none", "cbty")
N_CHANNELS = 4


class EncodingError(ValueError):
    pass


def hankel_encoding(grid: Grid2D, k0: float) -> np.ndarray:
    """Far-field Hankel amplitude sqrt(2 / (pi k0 r)), repeated down every column."""
    if not k0 > 0:
        raise EncodingError("k0 must be positive")
    r = grid.ranges
    if np.any(r <= 0):
        raise EncodingError("ranges must be positive")
    row = np.sqrt(2.0 / (np.pi * k0 * r))
    return np.broadcast_to(row, grid.shape).copy()


def bathymetry_encoding(ssf: SoundSpeedField) -> np.ndarray:
    return np.where(ssf.water_mask(), ssf.c, ssf.v_sed)


def bathymetry_channel(ssf: SoundSpeedField) -> np.ndarray:
    """Sea-floor depth repeated down each column (the separate-channel ablation)."""
    return np.broadcast_to(ssf.bathy, ssf.grid.shape).copy()


def positional_encoding(grid: Grid2D) -> tuple[np.ndarray, np.ndarray]:
    r_hat = np.linspace(0.0, 1.0, grid.n_range)
    z_hat = np.linspace(0.0, 1.0, grid.n_depth)
    pe_r = np.broadcast_to(r_hat[None, :], grid.shape).copy()
    pe_z = np.broadcast_to(z_hat[:, None], grid.shape).copy()
    return pe_r, pe_z


@dataclass(frozen=True, eq=False)
class EncodedInput:
    grid: Grid2D
    channels: np.ndarray  # [4, n_depth, n_range]

    def __post_init__(self):
        if self.channels.shape != (N_CHANNELS, *self.grid.shape):
            raise EncodingError(f"expected channels {(N_CHANNELS, *self.grid.shape)}, got {self.channels.shape}")
        if not np.all(np.isfinite(self.channels)):
            raise EncodingError("non-finite input channel")


def assemble_input(scn: Scenario, variant: str = "bty+hf") -> EncodedInput:
    if variant not in VARIANTS:
        raise EncodingError(f"unknown encoding variant {variant!r}; choose from {VARIANTS}")
    g = scn.grid
    raw = np.asarray(scn.ssf.c, dtype=np.float64)
    pe_r, pe_z = positional_encoding(g)
    if variant == "bty+hf":
        first, second = hankel_encoding(g, scn.k0), bathymetry_encoding(scn.ssf)
    elif variant == "bty":
        first, second = raw, bathymetry_encoding(scn.ssf)
    elif variant == "cbty":
        first, second = raw, bathymetry_channel(scn.ssf)
    else:
        first, second = raw, raw
    return EncodedInput(g, np.stack([first, second, pe_r, pe_z]))


# ------------------------------------------------------------ standardization

@dataclass(frozen=True)
class StandardStats:
    mu_in: tuple[float, ...]
    sigma_in: tuple[float, ...]
    mu_out: float
    sigma_out: float

    def __post_init__(self):
        if min(self.sigma_in) <= 0 or self.sigma_out <= 0:
            raise EncodingError("standard deviations must be strictly positive")

    def to_dict(self) -> dict:
        return {"mu_in": list(self.mu_in), "sigma_in": list(self.sigma_in),
                "mu_out": self.mu_out, "sigma_out": self.sigma_out}

    @classmethod
    def from_dict(cls, d: dict) -> "StandardStats":
        return cls(tuple(map(float, d["mu_in"])), tuple(map(float, d["sigma_in"])),
                   float(d["mu_out"]), float(d["sigma_out"]))


def fit_stats(inputs: np.ndarray, targets: np.ndarray) -> StandardStats:
    """Per-channel moments of ``inputs`` [S, C, M, N]; scalar moments of ``targets`` [S, M, N]."""
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if inputs.ndim != 4 or inputs.shape[0] == 0:
        raise EncodingError("need a non-empty [S, C, M, N] input stack")
    mu = inputs.mean(axis=(0, 2, 3))
    sd = inputs.std(axis=(0, 2, 3))
    mu_o, sd_o = float(targets.mean()), float(targets.std())
    bad = [i for i, s in enumerate(sd) if not s > 0]
    if bad:
        raise EncodingError(f"zero variance in input channel(s) {bad}; cannot standardize")
    if not sd_o > 0:
        raise EncodingError("zero variance in targets; cannot standardize")
    return StandardStats(tuple(map(float, mu)), tuple(map(float, sd)), mu_o, sd_o)


def _chan(stats_vals, ndim):
    v = np.asarray(stats_vals)
    return v.reshape((-1,) + (1,) * (ndim - 1))


def standardize(x: np.ndarray, stats: StandardStats) -> np.ndarray:
    """Inputs shaped [..., C, M, N]."""
    x = np.asarray(x, dtype=np.float64)
    return (x - _chan(stats.mu_in, 3)) / _chan(stats.sigma_in, 3)


def destandardize(x: np.ndarray, stats: StandardStats) -> np.ndarray:
    return np.asarray(x, dtype=np.float64) * _chan(stats.sigma_in, 3) + _chan(stats.mu_in, 3)


def standardize_output(u: np.ndarray, stats: StandardStats) -> np.ndarray:
    return (np.asarray(u, dtype=np.float64) - stats.mu_out) / stats.sigma_out


def destandardize_output(u: np.ndarray, stats: StandardStats) -> np.ndarray:
    return np.asarray(u, dtype=np.float64) * stats.sigma_out + stats.mu_out
