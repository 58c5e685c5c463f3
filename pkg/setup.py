"""Build script: compiles the integrand kernel when Cython is available.

The package works without the extension; ``emlab.kernels`` falls back to the
numpy implementation at import time.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("EML_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "emlab._kernels",
                    ["src/emlab/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
