import os
import platform

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; tlfno.kernels falls back to numpy
    cythonize = None


def _libmvec():
    """glibc >= 2.35 on x86_64 ships vectorised erf in libmvec."""
    if platform.machine() != "x86_64" or os.environ.get("TLFNO_NO_LIBMVEC"):
        return False
    lib, ver = platform.libc_ver()
    if lib != "glibc" or not ver:
        return False
    return tuple(int(v) for v in ver.split(".")[:2]) >= (2, 35)


ext_modules = []
if cythonize is not None and not os.environ.get("TLFNO_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "tlfno._kernels",
                ["src/tlfno/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("TLFNO_LIBMVEC", "1")] if _libmvec() else [],
                libraries=["mvec", "m"] if _libmvec() else [],
                optional=True,
            )
        ],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )

setup(ext_modules=ext_modules)
