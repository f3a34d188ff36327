"""Builds the optional compiled LCA core. The package works without it
(a NumPy fallback is selected at import), so compilation failures are
non-fatal by design: install with ONSD_SKIP_EXT=1 to force the fallback."""

import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("ONSD_SKIP_EXT"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "onsd.lca._core",
                    ["src/onsd/lca/_core.pyx"],
                    extra_compile_args=["-O3", "-march=native"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
