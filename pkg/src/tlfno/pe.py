"""Split-step Fourier solver for the standard parabolic equation.

The envelope obeys ``2i k0 psi_r + psi_zz + k0^2 (n^2 - 1) psi = 0`` and is
marched in range with symmetric (Strang) splitting: half a refraction phase
screen, a diffraction step that is diagonal in vertical wavenumber, then the
other half screen. The pressure-release surface is enforced by marching the
odd extension of each column about ``z = 0``. Below the sea floor the sound
speed is the sediment speed; beneath the grid a raised-cosine sponge absorbs
outgoing energy.

The solver marches on an internal grid that refines the output grid by
integer factors in both range and depth, so output samples are picked out
exactly, never interpolated.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .grid import Grid2D, Scenario

log = logging.getLogger(__name__)


class PEError(RuntimeError):
    pass


class PEBlowUp(PEError):
    """Non-finite envelope during marching."""

    def __init__(self, step: int, r: float):
        super().__init__(f"propagation blew up at range step {step} (r = {r:.2f} m)")
        self.step = step
        self.r = r


@dataclass(frozen=True)
class PEConfig:
    depth_extension_factor: float = 0.5
    sponge_strength: float = 0.5        # peak attenuation per internal step, nepers
    starter_width_factor: float = 1.0   # Gaussian half-width in units of 1/k0
    tl_clip: float = 120.0
    max_range_step: float | None = None  # default: one wavelength
    max_depth_step: float | None = None  # default: half the starter width

    def __post_init__(self):
        if self.depth_extension_factor < 0:
            raise PEError("depth_extension_factor must be >= 0")
        if self.sponge_strength < 0:
            raise PEError("sponge_strength must be >= 0")
        if not self.starter_width_factor > 0:
            raise PEError("starter_width_factor must be positive")


@dataclass(frozen=True, eq=False)
class EnvelopeField:
    """Envelope on the output grid plus ``n_depth_ext - n_depth`` extension rows at the same dz."""

    grid: Grid2D
    psi: np.ndarray

    @property
    def n_depth_ext(self) -> int:
        return self.psi.shape[0]


@dataclass(frozen=True, eq=False)
class TLField:
    grid: Grid2D
    tl: np.ndarray


def _check_source(scn: Scenario):
    if scn.source_depth <= 0:
        raise PEError("source at or above the surface")
    if scn.source_depth >= scn.ssf.bathy.min():
        raise PEError("source below the bathymetry")


def gaussian_starter(scn: Scenario, z: np.ndarray, width_factor: float = 1.0) -> np.ndarray:
    """Gaussian starter minus its surface image, sampled at depths ``z``."""
    _check_source(scn)
    k0 = scn.k0
    w = width_factor / k0
    zs = scn.source_depth
    amp = math.sqrt(k0) / width_factor
    z = np.asarray(z, dtype=np.float64)
    psi = amp * (np.exp(-0.5 * ((z - zs) / w) ** 2) - np.exp(-0.5 * ((z + zs) / w) ** 2))
    return psi.astype(np.complex128)


def vertical_wavenumbers(n: int, dz: float) -> np.ndarray:
    return 2 * np.pi * sfft.fftfreq(n, d=dz)


def step_envelope(psi_col, ssf_col, k0, dr, dz, c_ref=1500.0, sponge=None, kz=None):
    """Advance one periodic column by ``dr``.

    ``sponge`` holds per-sample attenuation exponents (nepers) applied after the
    step; ``kz`` can be passed to avoid recomputing wavenumbers in a march.
    """
    psi_col = np.asarray(psi_col, dtype=np.complex128)
    ssf_col = np.asarray(ssf_col, dtype=np.float64)
    if psi_col.shape != ssf_col.shape:
        raise PEError(f"length mismatch: psi {psi_col.shape} vs sound speed {ssf_col.shape}")
    if not (k0 > 0 and dr > 0 and dz > 0):
        raise PEError("k0, dr and dz must be positive")
    if not np.all(np.isfinite(psi_col)):
        raise PEError("non-finite envelope")
    if np.any(ssf_col == 0) or not np.all(np.isfinite(ssf_col)):
        raise PEError("zero or non-finite sound speed")
    if kz is None:
        kz = vertical_wavenumbers(psi_col.size, dz)
    half = _half_screen(ssf_col, k0, dr, c_ref)
    prop = np.exp(-1j * kz**2 * dr / (2 * k0))
    out = half * sfft.ifft(prop * sfft.fft(half * psi_col))
    if sponge is not None:
        out *= np.exp(-sponge)
    return out


def _half_screen(c, k0, dr, c_ref):
    n2 = (c_ref / c) ** 2
    return np.exp(1j * k0 * (n2 - 1.0) * dr / 4.0)


@dataclass(frozen=True)
class _March:
    p: int          # internal steps per output column
    q: int          # internal rows per output row
    dr: float
    dz: float
    n_out_ext: int  # output-spaced rows including extension
    n_fine: int     # internal rows 0..n_fine-1 (z = 0 included, bottom wall excluded)


def _march_plan(grid: Grid2D, scn: Scenario, cfg: PEConfig) -> _March:
    lam = scn.wavelength
    dr_max = cfg.max_range_step or min(grid.dr, lam)
    p = max(1, math.ceil(grid.dr / dr_max - 1e-9))
    dz_max = cfg.max_depth_step or 0.5 * cfg.starter_width_factor / scn.k0
    q = max(1, math.ceil(grid.dz / dz_max - 1e-9))
    n_ext_rows = math.ceil(cfg.depth_extension_factor * grid.depth_extent / grid.dz)
    n_out_ext = grid.n_depth + n_ext_rows
    # one extra output spacing so the zero wall of the odd extension sits below the last kept row
    n_fine = (n_out_ext - 1) * q + q
    return _March(p, q, grid.dr / p, grid.dz / q, n_out_ext, n_fine)


def _sponge_profile(plan: _March, grid: Grid2D, strength: float) -> np.ndarray:
    z = np.arange(plan.n_fine) * plan.dz
    z_top = grid.depth_extent
    z_bot = plan.n_fine * plan.dz
    s = np.clip((z - z_top) / max(z_bot - z_top, plan.dz), 0.0, 1.0)
    return strength * 0.5 * (1.0 - np.cos(np.pi * s))


def _column_speed(scn: Scenario, j: int, z_fine: np.ndarray) -> np.ndarray:
    ssf = scn.ssf
    g = ssf.grid
    c = np.interp(z_fine, g.depths, ssf.c[:, j])
    c[z_fine > ssf.bathy[j]] = ssf.v_sed
    return c


def _odd(col: np.ndarray) -> np.ndarray:
    """Odd extension about z=0 with zeros at z=0 and at the bottom wall."""
    n = col.size
    out = np.empty(2 * n, dtype=col.dtype)
    out[:n] = col
    out[0] = 0.0
    out[n] = 0.0
    out[n + 1:] = -col[:0:-1]
    return out


def _even(col: np.ndarray) -> np.ndarray:
    n = col.size
    out = np.empty(2 * n, dtype=col.dtype)
    out[:n] = col
    out[n] = col[-1]
    out[n + 1:] = col[:0:-1]
    return out


def solve_pe(scn: Scenario, cfg: PEConfig = PEConfig()) -> EnvelopeField:
    """March the envelope out to the last grid column."""
    grid = scn.grid
    plan = _march_plan(grid, scn, cfg)
    k0 = scn.k0
    z_fine = np.arange(plan.n_fine) * plan.dz
    sponge = _even(_sponge_profile(plan, grid, cfg.sponge_strength))
    att = np.exp(-sponge)
    kz = vertical_wavenumbers(2 * plan.n_fine, plan.dz)
    prop = np.exp(-1j * kz**2 * plan.dr / (2 * k0))

    psi = _odd(gaussian_starter(scn, z_fine, cfg.starter_width_factor))
    keep = np.arange(plan.n_out_ext) * plan.q
    out = np.empty((plan.n_out_ext, grid.n_range), dtype=np.complex128)
    log.debug("PE march: %d x %d internal steps, %d internal rows", grid.n_range, plan.p, plan.n_fine)

    step = 0
    for j in range(grid.n_range):
        half = _half_screen(_even(_column_speed(scn, j, z_fine)), k0, plan.dr, scn.c_ref)
        for _ in range(plan.p):
            psi = half * sfft.ifft(prop * sfft.fft(half * psi)) * att
            step += 1
        if not np.all(np.isfinite(psi[keep])):
            raise PEBlowUp(step, step * plan.dr)
        out[:, j] = psi[keep]
    return EnvelopeField(grid, out)


def reference_amplitude(k0: float) -> float:
    """Free-field far-field pressure amplitude of the Gaussian starter at r = 1 m."""
    return math.sqrt(2.0 / (math.pi * k0))


def envelope_to_tl(env: EnvelopeField, k0: float, tl_clip: float = 120.0) -> TLField:
    if not k0 > 0:
        raise PEError("k0 must be positive")
    g = env.grid
    psi = env.psi[: g.n_depth]
    if not np.all(np.isfinite(psi)):
        raise PEError("non-finite envelope")
    amp = np.abs(psi) * np.sqrt(2.0 / (np.pi * k0 * g.ranges))[None, :] / reference_amplitude(k0)
    with np.errstate(divide="ignore"):
        tl = -20.0 * np.log10(amp)
    np.clip(tl, 0.0, tl_clip, out=tl)
    return TLField(g, tl)


def solve_tl(scn: Scenario, cfg: PEConfig = PEConfig()) -> TLField:
    return envelope_to_tl(solve_pe(scn, cfg), scn.k0, cfg.tl_clip)


def image_solution_envelope(scn: Scenario, r, z, width_factor: float = 1.0) -> np.ndarray:
    """Closed-form standard-PE envelope of the Gaussian starter plus its surface image
    in a homogeneous (n = 1) unbounded medium."""
    k0 = scn.k0
    w0 = width_factor / k0
    zs = scn.source_depth
    r = np.asarray(r, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    s = w0**2 + 1j * r / k0
    amp = math.sqrt(k0) / width_factor * w0 / np.sqrt(s)
    return amp * (np.exp(-((z - zs) ** 2) / (2 * s)) - np.exp(-((z + zs) ** 2) / (2 * s)))


def image_solution_tl(scn: Scenario, width_factor: float = 1.0, tl_clip: float = 120.0) -> TLField:
    g = scn.grid
    psi = image_solution_envelope(scn, g.ranges[None, :], g.depths[:, None], width_factor)
    return envelope_to_tl(EnvelopeField(g, psi), scn.k0, tl_clip)
