"""Build script for the optional compiled integration kernels.

The package is fully functional without the extension (a pure-numpy
fallback is selected at import time), so a missing compiler or Cython
only costs speed, not features.
"""

import os

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# the per-step random draws use numpy's C distribution functions, which
# live in the static libnpyrandom shipped inside the numpy install
_npyrandom_dir = os.path.abspath(
    os.path.join(numpy.get_include(), "..", "..", "random", "lib")
)

extensions = [
    Extension(
        "btcsim._kernels._core",
        ["src/btcsim/_kernels/_core.pyx"],
        include_dirs=[numpy.get_include()],
        library_dirs=[_npyrandom_dir],
        libraries=["npyrandom"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_9_API_VERSION")],
        extra_compile_args=["-O3"],
    )
]

if cythonize is not None:
    ext_modules = cythonize(
        extensions,
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
else:
    ext_modules = []

setup(ext_modules=ext_modules)
