"""Builds the optional compiled core; the package works without it."""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("DZM_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("dzm._core", ["src/dzm/_core.pyx"], include_dirs=[numpy.get_include()],
                       extra_compile_args=["-O3"])],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
