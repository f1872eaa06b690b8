"""Build script: compiles the monodromy propagator extension when a toolchain
is available, otherwise installs pure-Python only (the package falls back to
the NumPy kernel at import time)."""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("BLOCHSPEC_NO_EXTENSION") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "blochspec.kernels._propagator",
                    ["src/blochspec/kernels/_propagator.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
