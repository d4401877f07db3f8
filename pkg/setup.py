import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("LFP_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [Extension("lfp.kernels._native", ["src/lfp/kernels/_native.pyx"])],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )
    except ImportError:
        # No Cython at build time: install as pure Python, the fallback
        # kernels take over at import.
        ext_modules = []

setup(ext_modules=ext_modules)
