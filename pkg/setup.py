"""Build script: compiles the optional Monte-Carlo kernel extension.

The package works without the extension (a vectorized numpy fallback is
selected at import time), so a failed compile only costs speed.
"""

import sys

from setuptools import Extension, setup


def extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "qpengine._fast",
        ["src/qpengine/_fast.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level=3)


try:
    setup(ext_modules=extensions())
except SystemExit:
    raise
except Exception as exc:  # pragma: no cover - build-environment dependent
    print(f"warning: extension build failed ({exc}); installing pure-python package", file=sys.stderr)
    setup(ext_modules=[])
