import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # fall back to the pure-numpy kernels
    cythonize = None


def _compile_args():
    args = ["-O3", "-fcx-limited-range"]
    # portable builds (wheels, heterogeneous clusters) set GKPQEC_PORTABLE=1
    if os.environ.get("GKPQEC_PORTABLE") != "1":
        args.append("-march=native")
    return args


ext_modules = []
if cythonize is not None and os.environ.get("GKPQEC_NO_EXT") != "1":
    ext_modules = cythonize(
        [
            Extension(
                "gkpqec._kernels",
                ["src/gkpqec/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=_compile_args(),
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
