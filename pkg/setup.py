import os

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# BLINK_PURE_ONLY=1 skips the compiled kernel; the package then runs on the
# pure-numpy fallback selected at import time.
if cythonize is not None and not os.environ.get("BLINK_PURE_ONLY"):
    ext_modules = cythonize(
        [
            Extension(
                "blink.kernels._accel",
                ["src/blink/kernels/_accel.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
else:
    ext_modules = []

setup(ext_modules=ext_modules)
