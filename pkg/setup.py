"""Build script for the optional compiled kernel extension.

The package is fully functional without the extension (a NumPy fallback is
selected at import time), so the build is marked optional: a missing compiler
degrades to the pure-Python wheel instead of failing the install.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "tpopf.kernels._core",
                ["src/tpopf/kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # -fcx-limited-range: plain complex multiply/divide without
                # the inf/nan fixup calls, matching NumPy's own arithmetic
                extra_compile_args=["-O3", "-fcx-limited-range"],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
