"""Build hook for the optional compiled kernels.

The Cython extension is optional: if Cython is missing or the compiler fails,
the package still installs and falls back to the numpy kernels at import time.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("SLCV_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:  # pragma: no cover
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "slcv._core",
                    ["src/slcv/_core.pyx"],
                    extra_compile_args=["-O3"],
                    optional=True,
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
