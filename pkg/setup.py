"""Build script for the compiled counting kernels.

The package works without the extension (a pure-Python fallback is selected
at import time), but the compiled kernels are 100-1000x faster on large
time-tag streams.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
    import numpy as np

    extensions = cythonize(
        [
            Extension(
                "plasmonlab._kernels",
                ["src/plasmonlab/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
