"""Fourier neural operator with hand-written reverse-mode gradients.

Layout is ``[batch, channel, depth, range]``. The spectral convolution takes a
real transform along depth and a full transform along range and keeps the
block of the first ``modes_z`` depth modes by the first and last ``modes_r``
range modes. Weights ``R`` therefore have shape ``[C, C, modes_z, 2*modes_r]``
and never depend on the grid size.

Transform convention: forward transforms are unnormalised, inverses carry
``1/(M*N)``.

Complex gradients follow the convention ``dL = Re(sum(conj(G) * dR))``, i.e.
``G = dL/dRe(R) + 1j*dL/dIm(R)``, so a real descent step on the real and
imaginary parts is ``R -= lr * G``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from . import kernels
from .encodings import StandardStats, destandardize_output, standardize

_workers = 1


def set_threads(n: int) -> None:
    """Worker threads for the FFT library; results do not depend on the count."""
    global _workers
    _workers = max(1, int(n))


class ModelError(ValueError):
    pass


# ------------------------------------------------------------------ transforms

def dft2(v: np.ndarray) -> np.ndarray:
    return sfft.fft2(v, axes=(-2, -1), workers=_workers)


def idft2(spec: np.ndarray) -> np.ndarray:
    return sfft.ifft2(spec, axes=(-2, -1), workers=_workers)


def _depth_weights(modes_z: int, M: int) -> np.ndarray:
    """Multiplicity of each kept depth mode in the Hermitian half spectrum."""
    c = np.full(modes_z, 2.0)
    c[0] = 1.0
    if M % 2 == 0 and modes_z > M // 2:
        c[M // 2] = 1.0
    return c


def _check_modes(M: int, N: int, modes_z: int, modes_r: int) -> None:
    if modes_z > M // 2 + 1 or 2 * modes_r > N:
        raise ModelError(
            f"modes ({modes_z}, {modes_r}) exceed a {M}x{N} grid: need modes_z <= {M // 2 + 1}, "
            f"modes_r <= {N // 2}")


def truncated_spectrum(v: np.ndarray, modes_z: int, modes_r: int) -> np.ndarray:
    """Unnormalised DFT of real ``v`` [..., M, N] at the kept modes -> [..., modes_z, 2*modes_r]."""
    vt = np.ascontiguousarray(np.swapaxes(v, -1, -2))
    return np.swapaxes(_spectrum_t(vt, modes_z, modes_r), -1, -2)


def truncated_inverse(Y: np.ndarray, M: int, N: int) -> np.ndarray:
    """Real field whose half spectrum is ``Y`` on the kept block and zero elsewhere."""
    Yt = np.ascontiguousarray(np.swapaxes(Y, -1, -2))
    return np.swapaxes(_inverse_t(Yt, M, N), -1, -2)


# Internally fields are stored range-major, [..., N, M], so the depth
# transforms run along the contiguous axis. When only a few depth modes are
# kept they are computed as real matrix products against cached DFT tables,
# which is cheaper than a full-length FFT followed by truncation.

_GEMM_MAX_MODES = 24


@lru_cache(maxsize=64)
def _depth_tables(M: int, modes_z: int):
    """Interleaved (re, im) forward table [M, 2kz] and real inverse table [2kz, M]."""
    m = np.arange(M)
    ang = 2 * np.pi * (np.outer(m, np.arange(modes_z)) % M) / M
    fwd = np.empty((M, 2 * modes_z))
    fwd[:, 0::2] = np.cos(ang)
    fwd[:, 1::2] = -np.sin(ang)
    w = _depth_weights(modes_z, M) / M
    inv = np.empty((2 * modes_z, M))
    inv[0::2] = (w[:, None] * np.cos(ang.T))
    inv[1::2] = -(w[:, None] * np.sin(ang.T))
    fwd.flags.writeable = False
    inv.flags.writeable = False
    return fwd, inv


def _depth_forward(vt, modes_z):
    M = vt.shape[-1]
    if modes_z <= _GEMM_MAX_MODES:
        fwd, _ = _depth_tables(M, modes_z)
        out = np.ascontiguousarray(vt).reshape(-1, M) @ fwd
        return out.view(np.complex128).reshape(vt.shape[:-1] + (modes_z,))
    return sfft.rfft(vt, axis=-1, workers=_workers)[..., :modes_z]


def _depth_inverse(g, M):
    modes_z = g.shape[-1]
    if modes_z <= _GEMM_MAX_MODES:
        _, inv = _depth_tables(M, modes_z)
        flat = np.ascontiguousarray(g).view(np.float64).reshape(-1, 2 * modes_z)
        return (flat @ inv).reshape(g.shape[:-1] + (M,))
    return sfft.irfft(g, n=M, axis=-1, workers=_workers)


def _spectrum_t(vt, modes_z, modes_r):
    N = vt.shape[-2]
    X = sfft.fft(_depth_forward(vt, modes_z), axis=-2, workers=_workers)
    return np.concatenate([X[..., :modes_r, :], X[..., N - modes_r:, :]], axis=-2)


def _inverse_t(Yt, M, N):
    modes_r = Yt.shape[-2] // 2
    full = np.zeros(Yt.shape[:-2] + (N, Yt.shape[-1]), dtype=np.complex128)
    full[..., :modes_r, :] = Yt[..., :modes_r, :]
    full[..., N - modes_r:, :] = Yt[..., modes_r:, :]
    g = sfft.ifft(full, axis=-2, workers=_workers, overwrite_x=True)
    return _depth_inverse(g, M)


def spectral_conv(v: np.ndarray, R: np.ndarray, modes_z: int | None = None,
                  modes_r: int | None = None) -> np.ndarray:
    """Mode-truncated spectral convolution of ``v`` [B, C, M, N] (or [C, M, N])."""
    squeeze = v.ndim == 3
    if squeeze:
        v = v[None]
    B, C, M, N = v.shape
    kz = R.shape[2] if modes_z is None else modes_z
    kr = R.shape[3] // 2 if modes_r is None else modes_r
    if R.shape[0] != C or R.shape[2:] != (kz, 2 * kr):
        raise ModelError(f"weight shape {R.shape} does not match modes ({kz}, {kr})")
    _check_modes(M, N, kz, kr)
    vt = np.ascontiguousarray(v.swapaxes(-1, -2))
    out = np.swapaxes(_spectral_forward(vt, _weights_t(R))[0], -1, -2)
    return out[0] if squeeze else out


def _weights_t(R):
    return np.ascontiguousarray(R.swapaxes(-1, -2))


def _spectral_forward(vt, Rt):
    """``vt`` [B, C, N, M], ``Rt`` [C, Co, 2kr, kz]."""
    B, C, N, M = vt.shape
    Co, k2, kz = Rt.shape[1], Rt.shape[2], Rt.shape[3]
    Vt = _spectrum_t(vt, kz, k2 // 2)
    Y = kernels.spectral_mix(Vt.reshape(B, C, k2 * kz), Rt.reshape(C, Co, k2 * kz))
    return _inverse_t(Y.reshape(B, Co, k2, kz), M, N), Vt


def _spectral_backward(gt, Vt, Rt):
    """Gradients of the spectral convolution w.r.t. its input and (range-major) weights."""
    B, Co, N, M = gt.shape
    C, k2, kz = Rt.shape[0], Rt.shape[2], Rt.shape[3]
    cz = _depth_weights(kz, M)
    GY = _spectrum_t(gt, kz, k2 // 2) * (cz / (M * N))
    GV, GR = kernels.spectral_mix_adjoint(GY.reshape(B, Co, k2 * kz), Vt.reshape(B, C, k2 * kz),
                                          Rt.reshape(C, Co, k2 * kz))
    gv = _inverse_t(GV.reshape(B, C, k2, kz) / cz, M, N) * (M * N)
    return gv, GR.reshape(Rt.shape)


def gelu(x):
    return kernels.gelu_fwd(x)[0]


def gelu_grad(x):
    return kernels.gelu_fwd(x)[1]


# ------------------------------------------------------------------- parameters

@dataclass(frozen=True)
class Hyperparams:
    n_layers: int = 4
    width: int = 64
    modes_z: int = 64
    modes_r: int = 64
    in_channels: int = 4
    out_channels: int = 1

    def __post_init__(self):
        for k in ("n_layers", "width", "modes_z", "modes_r", "in_channels", "out_channels"):
            if getattr(self, k) < 1:
                raise ModelError(f"{k} must be positive")

    def clipped_to(self, M: int, N: int) -> "Hyperparams":
        return Hyperparams(self.n_layers, self.width, min(self.modes_z, M // 2 + 1),
                           min(self.modes_r, N // 2), self.in_channels, self.out_channels)

    def shapes(self) -> dict[str, tuple[tuple[int, ...], type]]:
        C = self.width
        out = {"lift.w": ((C, self.in_channels), np.float64), "lift.b": ((C,), np.float64)}
        for i in range(self.n_layers):
            out[f"layers.{i}.R"] = ((C, C, self.modes_z, 2 * self.modes_r), np.complex128)
            out[f"layers.{i}.W"] = ((C, C), np.float64)
            out[f"layers.{i}.b"] = ((C,), np.float64)
        out["proj.w"] = ((self.out_channels, C), np.float64)
        out["proj.b"] = ((self.out_channels,), np.float64)
        return out

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def count_params(hp: Hyperparams) -> int:
    """Real degrees of freedom; a complex weight counts twice."""
    C, ci, co = hp.width, hp.in_channels, hp.out_channels
    per_layer = 2 * C * C * hp.modes_z * 2 * hp.modes_r + C * C + C
    return C * ci + C + hp.n_layers * per_layer + co * C + co


@dataclass(eq=False)
class ModelParams:
    hp: Hyperparams
    tensors: dict[str, np.ndarray]
    stats: StandardStats | None = None
    variant: str = "bty+hf"

    def __post_init__(self):
        shapes = self.hp.shapes()
        if set(shapes) != set(self.tensors):
            raise ModelError(f"tensor names {sorted(self.tensors)} do not match hyperparameters")
        for name, (shape, dtype) in shapes.items():
            t = self.tensors[name]
            if t.shape != shape or t.dtype != dtype:
                raise ModelError(f"{name}: expected {shape} {np.dtype(dtype)}, got {t.shape} {t.dtype}")

    def copy(self) -> "ModelParams":
        return ModelParams(self.hp, {k: v.copy() for k, v in self.tensors.items()}, self.stats, self.variant)

    def n_real(self) -> int:
        return sum(t.size * (2 if np.iscomplexobj(t) else 1) for t in self.tensors.values())

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(t)) for t in self.tensors.values())


def init_params(hp: Hyperparams, seed: int = 0, stats: StandardStats | None = None,
                variant: str = "bty+hf") -> ModelParams:
    rng = np.random.default_rng(seed)
    C = hp.width
    tensors = {}
    for name, (shape, dtype) in hp.shapes().items():
        if dtype is np.complex128:
            scale = 1.0 / (C * C)
            mag = scale * rng.random(shape)
            tensors[name] = mag * np.exp(2j * np.pi * rng.random(shape))
        else:
            fan_in = shape[1] if len(shape) == 2 else (hp.in_channels if name.startswith("lift") else C)
            bound = 1.0 / np.sqrt(fan_in)
            tensors[name] = rng.uniform(-bound, bound, shape)
    return ModelParams(hp, tensors, stats, variant)


# ---------------------------------------------------------------------- forward

@dataclass
class ForwardTape:
    x: np.ndarray
    layer_inputs: list = field(default_factory=list)
    spectra: list = field(default_factory=list)
    act_grads: list = field(default_factory=list)
    last: np.ndarray | None = None


def _pointwise(w, b, v):
    B, C, M, N = v.shape
    out = np.matmul(w, v.reshape(B, C, M * N))
    out += b[None, :, None]
    return out.reshape(B, w.shape[0], M, N)


def _pointwise_grads(w, g, v):
    B, Co, M, N = g.shape
    g2 = g.reshape(B, Co, M * N)
    v2 = v.reshape(B, v.shape[1], M * N)
    gw = np.einsum("bom,bim->oi", g2, v2, optimize=True)
    gb = g2.sum(axis=(0, 2))
    gin = np.matmul(w.T, g2).reshape(B, w.shape[1], M, N)
    return gw, gb, gin


def forward(params: ModelParams, x: np.ndarray, want_tape: bool = False, activation: str = "gelu"):
    """Standardized inputs [B, in, M, N] -> standardized prediction [B, out, M, N]."""
    hp = params.hp
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    if x.shape[1] != hp.in_channels:
        raise ModelError(f"expected {hp.in_channels} input channels, got {x.shape[1]}")
    M, N = x.shape[-2:]
    _check_modes(M, N, hp.modes_z, hp.modes_r)
    if not params.all_finite():
        raise ModelError("non-finite parameters")
    T = params.tensors
    xt = np.ascontiguousarray(x.swapaxes(-1, -2))
    tape = ForwardTape(xt) if want_tape else None

    v = _pointwise(T["lift.w"], T["lift.b"], xt)
    for i in range(hp.n_layers):
        Rt = _weights_t(T[f"layers.{i}.R"])
        s, Vt = _spectral_forward(v, Rt)
        h = s
        h += _pointwise(T[f"layers.{i}.W"], T[f"layers.{i}.b"], v)
        if activation == "gelu":
            v_next, dact = kernels.gelu_fwd(h) if tape is not None else (kernels.gelu(h), None)
        elif activation == "identity":
            v_next, dact = h, None
        else:
            raise ModelError(f"unknown activation {activation!r}")
        if tape is not None:
            tape.layer_inputs.append(v)
            tape.spectra.append(Vt)
            tape.act_grads.append(dact)
        v = v_next
    if tape is not None:
        tape.last = v
    out = _pointwise(T["proj.w"], T["proj.b"], v).swapaxes(-1, -2)
    return (out, tape) if want_tape else out


def backward(params: ModelParams, tape: ForwardTape, g_out: np.ndarray) -> dict[str, np.ndarray]:
    """Parameter gradients given dL/d(prediction) shaped like the forward output."""
    hp = params.hp
    T = params.tensors
    if tape.last is None or len(tape.layer_inputs) != hp.n_layers:
        raise ModelError("tape does not match these parameters")
    B, _, N, M = tape.last.shape
    g_out = np.asarray(g_out, dtype=np.float64).reshape(B, hp.out_channels, M, N)
    g_out = np.ascontiguousarray(g_out.swapaxes(-1, -2))
    grads = {}
    grads["proj.w"], grads["proj.b"], g = _pointwise_grads(T["proj.w"], g_out, tape.last)
    for i in reversed(range(hp.n_layers)):
        dact = tape.act_grads[i]
        gh = g if dact is None else g * dact
        gw, gb, g_lin = _pointwise_grads(T[f"layers.{i}.W"], gh, tape.layer_inputs[i])
        g_spec, gRt = _spectral_backward(gh, tape.spectra[i], _weights_t(T[f"layers.{i}.R"]))
        grads[f"layers.{i}.W"], grads[f"layers.{i}.b"] = gw, gb
        grads[f"layers.{i}.R"] = np.ascontiguousarray(gRt.swapaxes(-1, -2))
        g = g_lin + g_spec
    grads["lift.w"], grads["lift.b"], _ = _pointwise_grads(T["lift.w"], g, tape.x)
    return grads


def predict(params: ModelParams, inputs: np.ndarray, batch_size: int = 8) -> np.ndarray:
    """Raw encoded inputs [S, in, M, N] -> TL in dB [S, M, N]."""
    if params.stats is None:
        raise ModelError("model has no standardization statistics")
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim == 3:
        inputs = inputs[None]
    out = np.empty((inputs.shape[0],) + inputs.shape[-2:])
    for s in range(0, inputs.shape[0], batch_size):
        xb = standardize(inputs[s:s + batch_size], params.stats)
        out[s:s + batch_size] = forward(params, xb)[:, 0]
    return destandardize_output(out, params.stats)
