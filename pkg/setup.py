"""Build the optional compiled tree-growing kernel.

The package works without it (pure-Python fallback); a failed or skipped
compile only costs speed.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("KRF_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "krf._tree_ext",
                    ["src/krf/_tree_ext.pyx"],
                    include_dirs=[np.get_include()],
                    # no -ffast-math / -march: results must match the fallback bit for bit
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
