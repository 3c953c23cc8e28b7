"""Build script for the optional compiled kernel core.

The package works without the extension (a numpy fallback is selected at
import time), so a missing Cython or C compiler only costs speed.
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:  # pure-python install
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "cogeffort.net._fastcore",
                ["src/cogeffort/net/_fastcore.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
