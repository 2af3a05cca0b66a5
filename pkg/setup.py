"""Build script: compiles the optional Cython kernels.

The package works without the extension (pure numpy fallbacks are selected
at import time), so compilation failures are non-fatal.
"""

import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None and os.path.exists("src/gamehedge/_kernels.pyx"):
    extensions = cythonize(
        [
            Extension(
                "gamehedge._kernels",
                ["src/gamehedge/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)
