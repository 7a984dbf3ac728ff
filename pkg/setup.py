# Builds the optional compiled kernels. If Cython or a C compiler is missing the
# package still installs and falls back to brnagg._pykernels at import time.
import os
import sys

from setuptools import Extension, setup


def _extensions():
    if os.environ.get("BRNAGG_NO_EXT"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        print("brnagg: Cython/numpy unavailable, skipping compiled kernels", file=sys.stderr)
        return []
    ext = Extension(
        "brnagg._ckernels",
        ["src/brnagg/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )


setup(ext_modules=_extensions())
