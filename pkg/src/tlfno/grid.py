"""Range-depth grids and synthetic ocean environments.

Every synthetic field is an analytic function of physical position whose
random parameters depend only on ``(seed, index)``. Sampling the same
scenario on a finer grid therefore gives a consistent, band-limited
refinement, which is what zero-shot super-resolution needs.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

C_MIN, C_MAX = 1300.0, 1900.0

PROFILE_FAMILIES = ("munk-perturbed", "linear-thermocline")
BATHY_FAMILIES = ("flat", "slope", "smooth-random")


class GridError(ValueError):
    """Invalid grid, field or scenario."""


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Grid2D:
    """Uniform grid; column ``j`` sits at range ``r0 + j*dr``, row ``i`` at depth ``i*dz``."""

    n_range: int
    n_depth: int
    dr: float
    dz: float
    r0: float

    def __post_init__(self):
        if self.n_range < 2 or self.n_depth < 2:
            raise GridError(f"grid needs at least 2x2 points, got {self.n_range}x{self.n_depth}")
        if not (self.dr > 0 and self.dz > 0 and self.r0 > 0):
            raise GridError("dr, dz and r0 must be strictly positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_depth, self.n_range)

    @property
    def ranges(self) -> np.ndarray:
        return self.r0 + np.arange(self.n_range) * self.dr

    @property
    def depths(self) -> np.ndarray:
        return np.arange(self.n_depth) * self.dz

    @property
    def range_extent(self) -> float:
        return self.n_range * self.dr

    @property
    def depth_extent(self) -> float:
        return (self.n_depth - 1) * self.dz

    def refined(self, factor: int) -> "Grid2D":
        """Same physical extent with ``factor`` times the samples per axis."""
        return build_grid(self.n_range * factor, self.n_depth * factor,
                          self.range_extent, self.depth_extent)

    def to_dict(self) -> dict:
        return {"n_range": self.n_range, "n_depth": self.n_depth,
                "dr": self.dr, "dz": self.dz, "r0": self.r0}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid2D":
        return cls(int(d["n_range"]), int(d["n_depth"]), float(d["dr"]), float(d["dz"]), float(d["r0"]))


def build_grid(n_range: int, n_depth: int, range_extent: float, depth_extent: float) -> Grid2D:
    if n_range < 2 or n_depth < 2:
        raise GridError(f"grid needs at least 2 points per axis, got {n_range}x{n_depth}")
    if not (range_extent > 0 and depth_extent > 0):
        raise GridError("extents must be positive")
    dr = range_extent / n_range
    return Grid2D(int(n_range), int(n_depth), dr, depth_extent / (n_depth - 1), dr)


@dataclass(frozen=True, eq=False)
class SoundSpeedField:
    grid: Grid2D
    c: np.ndarray
    bathy: np.ndarray
    v_sed: float = 1700.0

    def __post_init__(self):
        object.__setattr__(self, "c", _frozen(self.c))
        object.__setattr__(self, "bathy", _frozen(self.bathy))
        g = self.grid
        if self.c.shape != g.shape:
            raise GridError(f"sound speed shape {self.c.shape} != grid {g.shape}")
        if self.bathy.shape != (g.n_range,):
            raise GridError(f"bathymetry length {self.bathy.shape} != n_range {g.n_range}")
        if not self.v_sed > 0:
            raise GridError("sediment speed must be positive")
        if not np.all(np.isfinite(self.c)):
            raise GridError("non-finite sound speed")
        # small slack: depth_extent is rebuilt from dz and may differ in the last ulp
        if np.any(self.bathy <= 0) or np.any(self.bathy > g.depth_extent * (1 + 1e-12)):
            raise GridError("bathymetry outside (0, depth_extent]")
        water = self.water_mask()
        cw = self.c[water]
        if cw.size and (cw.min() < C_MIN or cw.max() > C_MAX):
            raise GridError(f"water sound speed outside [{C_MIN}, {C_MAX}] m/s")

    def water_mask(self) -> np.ndarray:
        return self.grid.depths[:, None] <= self.bathy[None, :]


@dataclass(frozen=True, eq=False)
class Scenario:
    ssf: SoundSpeedField
    source_depth: float = 50.0
    source_freq: float = 200.0
    c_ref: float = 1500.0

    def __post_init__(self):
        if not self.source_freq > 0:
            raise GridError("source frequency must be positive")
        if not self.c_ref > 0:
            raise GridError("reference sound speed must be positive")
        if not 0 < self.source_depth < self.ssf.bathy.min():
            raise GridError(
                f"source depth {self.source_depth} m not inside the water column "
                f"(shallowest bottom {self.ssf.bathy.min():.1f} m)")

    @property
    def grid(self) -> Grid2D:
        return self.ssf.grid

    @property
    def k0(self) -> float:
        return 2 * np.pi * self.source_freq / self.c_ref

    @property
    def wavelength(self) -> float:
        return self.c_ref / self.source_freq

    def with_grid(self, grid: Grid2D, c: np.ndarray, bathy: np.ndarray) -> "Scenario":
        return replace(self, ssf=SoundSpeedField(grid, c, bathy, self.ssf.v_sed))


@dataclass(frozen=True)
class SynthConfig:
    seed: int
    n_samples: int
    grid: Grid2D
    profile_family: str = "munk-perturbed"
    bathy_family: str = "smooth-random"
    perturbation_scale: float = 5.0
    source_depth: float = 50.0
    source_freq: float = 200.0
    c_ref: float = 1500.0
    v_sed: float = 1700.0

    def __post_init__(self):
        if self.n_samples < 1:
            raise GridError("n_samples must be >= 1")
        if self.perturbation_scale < 0:
            raise GridError("perturbation_scale must be >= 0")
        if self.profile_family not in PROFILE_FAMILIES:
            raise GridError(f"unknown profile family {self.profile_family!r}")
        if self.bathy_family not in BATHY_FAMILIES:
            raise GridError(f"unknown bathymetry family {self.bathy_family!r}")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "grid"}
        d["grid"] = self.grid.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        d["grid"] = Grid2D.from_dict(d["grid"])
        return cls(**d)


# ---------------------------------------------------------------- generators

def munk_profile(z, axis_depth=1300.0, scale=1300.0, eps=0.00737, c_axis=1500.0):
    eta = 2.0 * (z - axis_depth) / scale
    return c_axis * (1.0 + eps * (eta - 1.0 + np.exp(-eta)))


def thermocline_profile(z, c_surface, mixed_depth, thickness, c_deep, gradient=0.017):
    """Isothermal mixed layer over a tanh thermocline and a pressure-gradient deep layer."""
    s = 0.5 * (1.0 + np.tanh((z - mixed_depth - 0.5 * thickness) / (0.25 * thickness)))
    below = np.maximum(z - mixed_depth - thickness, 0.0)
    return c_surface + (c_deep - c_surface) * s + gradient * below


@dataclass(frozen=True)
class _Draw:
    base: np.ndarray          # [n_depth]
    perturbation: np.ndarray  # [n_depth, n_range], |.| <= perturbation_scale
    bathy: np.ndarray         # [n_range]


def _rng(cfg: SynthConfig, index: int) -> np.random.Generator:
    return np.random.default_rng([int(cfg.seed) & 0xFFFFFFFF, int(index)])


def synth_components(cfg: SynthConfig, index: int, grid: Grid2D | None = None) -> _Draw:
    """Base profile, perturbation and bathymetry for one sample, sampled on ``grid``."""
    if not 0 <= index < cfg.n_samples:
        raise GridError(f"index {index} outside [0, {cfg.n_samples})")
    g = cfg.grid if grid is None else grid
    rng = _rng(cfg, index)
    D = g.depth_extent
    R = g.range_extent
    z = g.depths
    r = g.ranges

    if cfg.profile_family == "munk-perturbed":
        base = munk_profile(z, axis_depth=rng.uniform(0.55, 0.9) * max(D, 1.0),
                            scale=rng.uniform(0.7, 1.0) * max(D, 1.0),
                            c_axis=rng.uniform(1490.0, 1505.0))
    else:
        base = thermocline_profile(z, c_surface=rng.uniform(1525.0, 1540.0),
                                   mixed_depth=rng.uniform(0.03, 0.12) * D,
                                   thickness=rng.uniform(0.1, 0.3) * D,
                                   c_deep=rng.uniform(1485.0, 1500.0))

    # smooth range-dependent perturbation, strongest near the surface
    n_modes = 4
    kr = rng.uniform(0.5, 3.0, n_modes) * 2 * np.pi / R
    kz = rng.uniform(0.2, 1.5, n_modes) * np.pi / max(D, 1.0)
    ph_r = rng.uniform(0, 2 * np.pi, n_modes)
    ph_z = rng.uniform(0, 2 * np.pi, n_modes)
    amp = rng.normal(size=n_modes)
    decay = rng.uniform(0.2, 0.6) * max(D, 1.0)
    shape = np.zeros(g.shape)
    for a, k1, k2, p1, p2 in zip(amp, kr, kz, ph_r, ph_z):
        shape += a * np.cos(k2 * z[:, None] + p2) * np.cos(k1 * r[None, :] + p1)
    shape *= np.exp(-z / decay)[:, None]
    # normalise on a fixed reference lattice so refined grids sample the same field
    ref = _reference_peak(amp, kr, kz, ph_r, ph_z, decay, R, D)
    pert = cfg.perturbation_scale * rng.uniform(0.5, 1.0) * shape / ref if ref > 0 else np.zeros(g.shape)
    np.clip(pert, -cfg.perturbation_scale, cfg.perturbation_scale, out=pert)

    bathy = _bathymetry(cfg, rng, r, R, D)
    lo = min(D, cfg.source_depth + max(0.1 * D, 2.0 * cfg.grid.dz))
    if lo >= D and cfg.source_depth >= D:
        raise GridError("grid too shallow to hold the source")
    bathy = np.clip(bathy, lo, D)
    return _Draw(base, pert, bathy)


def _reference_peak(amp, kr, kz, ph_r, ph_z, decay, R, D, n=257):
    z = np.linspace(0.0, D, n)
    r = np.linspace(0.0, R, n)
    s = np.zeros((n, n))
    for a, k1, k2, p1, p2 in zip(amp, kr, kz, ph_r, ph_z):
        s += a * np.cos(k2 * z[:, None] + p2) * np.cos(k1 * r[None, :] + p1)
    s *= np.exp(-z / decay)[:, None]
    return float(np.abs(s).max())


def _bathymetry(cfg, rng, r, R, D):
    x = r / R
    if cfg.bathy_family == "flat":
        return np.full_like(r, rng.uniform(0.45, 0.9) * D)
    if cfg.bathy_family == "slope":
        d0, d1 = rng.uniform(0.3, 0.95, 2) * D
        return d0 + (d1 - d0) * x
    base = rng.uniform(0.45, 0.8) * D
    out = np.full_like(r, base)
    for _ in range(3):
        out += rng.uniform(0.03, 0.12) * D * np.sin(2 * np.pi * rng.uniform(0.3, 2.5) * x + rng.uniform(0, 2 * np.pi))
    return out


def synth_environment(cfg: SynthConfig, index: int, grid: Grid2D | None = None) -> Scenario:
    """Deterministic scenario number ``index``; ``grid`` resamples the same continuous fields."""
    g = cfg.grid if grid is None else grid
    d = synth_components(cfg, index, grid)
    c = d.base[:, None] + d.perturbation
    ssf = SoundSpeedField(g, c, d.bathy, cfg.v_sed)
    return Scenario(ssf, cfg.source_depth, cfg.source_freq, cfg.c_ref)
