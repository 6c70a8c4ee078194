"""Build script: compiles the optional LSTM kernel extension.

The package works without the extension (a pure-NumPy fallback is selected
at import time), so the extension is marked optional and a failed compile
does not abort installation.
"""

from setuptools import Extension, setup


def extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "nara.kernels._lstm",
        ["src/nara/kernels/_lstm.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
    return cythonize([ext], language_level=3)


setup(ext_modules=extensions())
