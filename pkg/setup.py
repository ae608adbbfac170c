"""Builds the optional compiled matching kernel.

The package works without it: logomine._kernels falls back to the pure
Python implementation when the extension is missing or LOGOMINE_PURE=1.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("LOGOMINE_PURE") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "logomine._kernels._matchc",
                    ["src/logomine/_kernels/_matchc.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level=3,
        )
        for ext in ext_modules:
            ext.optional = True  # degrade to pure Python if the compile fails
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
