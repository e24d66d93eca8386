"""Build script for the optional Cython attention kernel.

The package works without the extension (a numpy fallback is selected at
import time); building it just makes the packed cross-attention kernel
faster. Any compile failure is therefore non-fatal.
"""

import sys

import numpy as np
from setuptools import setup
from setuptools.errors import CompileError

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None


def extensions():
    if cythonize is None:
        return []
    from setuptools import Extension

    ext = Extension(
        "slidelm._kernels._seg_attn",
        sources=["src/slidelm/_kernels/_seg_attn.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


try:
    setup(ext_modules=extensions())
except (CompileError, SystemExit):
    print("slidelm: C extension build failed; installing pure-python fallback",
          file=sys.stderr)
    setup(ext_modules=[])
