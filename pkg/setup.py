"""Build script for the optional compiled kernel extension.

The package works without the extension (a pure-numpy fallback is selected
at import time), so a failed compile is not fatal for development installs:
run ``PENCRIT_SKIP_EXT=1 pip install -e . --no-build-isolation`` to skip it.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("PENCRIT_SKIP_EXT"):
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "pencrit._ckernels",
                ["src/pencrit/_ckernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
