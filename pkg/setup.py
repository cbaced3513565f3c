"""Build script for the optional compiled kernel extension.

The package works without the extension (a pure NumPy/Python fallback is
selected at import time), so a missing Cython or compiler only costs speed.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "protostream._kernels._native",
                sources=["src/protostream/_kernels/_native.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
