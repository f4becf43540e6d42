"""Build script: compiles the optional descriptor-kernel extension.

The package is fully functional without the extension (a pure-Python
fallback is selected at import time); the build therefore treats the
extension as optional and falls back to a plain install when Cython or
a C compiler is unavailable.
"""

from setuptools import setup, Extension

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "uddk._kernels._native",
                ["src/uddk/_kernels/_native.pyx"],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
