import os

import numpy as np
from setuptools import Extension, setup

# HARQERR_NO_EXT=1 skips the compiled kernels; the package then runs on the numpy fallback.
ext_modules = []
if not os.environ.get("HARQERR_NO_EXT"):
    from Cython.Build import cythonize

    extensions = [
        Extension(
            "harqerr._ckernels",
            ["src/harqerr/_ckernels.pyx"],
            include_dirs=[np.get_include()],
            extra_compile_args=["-O3"],
        )
    ]
    ext_modules = cythonize(extensions, compiler_directives={"language_level": "3"})

setup(ext_modules=ext_modules)
