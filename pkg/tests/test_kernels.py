import numpy as np
import pytest
from scipy.special import erf

from tlfno import kernels

py = kernels.python_backend
cc = kernels.compiled_backend
needs_ext = pytest.mark.skipif(cc is None, reason="compiled extension not built")


def _cplx(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def test_python_gelu_reference(rng):
    x = rng.normal(scale=3, size=1000)
    y, dy = py.gelu_fwd(x)
    np.testing.assert_allclose(y, 0.5 * x * (1 + erf(x / np.sqrt(2))), atol=1e-15)
    h = 1e-6
    fd = (py.gelu_fwd(x + h)[0] - py.gelu_fwd(x - h)[0]) / (2 * h)
    np.testing.assert_allclose(dy, fd, atol=1e-8)


def test_python_mix_reference(rng):
    V, R = _cplx(rng, 2, 3, 5), _cplx(rng, 3, 4, 5)
    Y = py.spectral_mix(V, R)
    np.testing.assert_allclose(Y, np.einsum("bik,iok->bok", V, R), atol=1e-13)
    GY = _cplx(rng, 2, 4, 5)
    GV, GR = py.spectral_mix_adjoint(GY, V, R)
    np.testing.assert_allclose(GV, np.einsum("bok,iok->bik", GY, R.conj()), atol=1e-13)
    np.testing.assert_allclose(GR, np.einsum("bok,bik->iok", GY, V.conj()), atol=1e-13)


@needs_ext
def test_backends_agree_gelu(rng):
    x = rng.normal(scale=4, size=(3, 5, 7, 11))
    y1, d1 = py.gelu_fwd(x)
    y2, d2 = cc.gelu_fwd(x)
    np.testing.assert_allclose(y2, y1, rtol=0, atol=1e-14)
    np.testing.assert_allclose(d2, d1, rtol=0, atol=1e-14)


@needs_ext
@pytest.mark.parametrize("shape", [(1, 1, 1), (2, 3, 17), (4, 8, 64)])
def test_backends_agree_mix(rng, shape):
    B, C, K = shape
    V, R = _cplx(rng, B, C, K), _cplx(rng, C, C + 1, K)
    np.testing.assert_allclose(cc.spectral_mix(V, R), py.spectral_mix(V, R), rtol=0, atol=1e-12)
    GY = _cplx(rng, B, C + 1, K)
    for a, b in zip(cc.spectral_mix_adjoint(GY, V, R), py.spectral_mix_adjoint(GY, V, R)):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_backend_flag():
    assert kernels.BACKEND in ("compiled", "python")
    assert py.BACKEND == "python"
