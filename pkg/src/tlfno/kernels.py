"""Kernel backend chosen at import.

The compiled extension is used when it was built; set ``TLFNO_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

from . import _kernels_py as python_backend

compiled_backend = None
if not os.environ.get("TLFNO_PURE_PYTHON"):
    try:
        from . import _kernels as compiled_backend
    except ImportError:
        compiled_backend = None

_active = compiled_backend or python_backend
BACKEND = _active.BACKEND
gelu = _active.gelu
gelu_fwd = _active.gelu_fwd
spectral_mix = _active.spectral_mix
spectral_mix_adjoint = _active.spectral_mix_adjoint
