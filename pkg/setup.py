import os

import numpy
from setuptools import Extension, setup

# The compiled kernels are an optimization, not a requirement: flexcast.kernels
# falls back to the numpy implementations when the extension is absent.
# Set FLEXCAST_SKIP_EXT=1 to install without compiling.
if os.environ.get("FLEXCAST_SKIP_EXT") == "1":
    ext_modules = []
else:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "flexcast.kernels._core",
                sources=["src/flexcast/kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
