"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np
from scipy.special import erf

BACKEND = "python"

_INV_SQRT2 = 0.70710678118654752440
_INV_SQRT2PI = 0.39894228040143267794


def gelu_fwd(x):
    x = np.asarray(x, dtype=np.float64)
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    return x * cdf, cdf + x * _INV_SQRT2PI * np.exp(-0.5 * x * x)


def gelu(x):
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def spectral_mix(V, R):
    # batch the per-mode channel matmuls: [K, B, Ci] @ [K, Ci, Co]
    Y = np.matmul(V.transpose(2, 0, 1), R.transpose(2, 0, 1))
    return np.ascontiguousarray(Y.transpose(1, 2, 0))


def spectral_mix_adjoint(GY, V, R):
    gy = GY.transpose(2, 0, 1)                       # [K, B, Co]
    GV = np.matmul(gy, R.conj().transpose(2, 1, 0))  # [K, B, Ci]
    GR = np.matmul(V.conj().transpose(2, 1, 0), gy)  # [K, Ci, Co]
    return (np.ascontiguousarray(GV.transpose(1, 2, 0)),
            np.ascontiguousarray(GR.transpose(1, 2, 0)))
