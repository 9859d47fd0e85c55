"""Build script. Compiles the optional Cython speedup kernels when possible.

A missing Cython or C compiler is not fatal: the package falls back to the
pure NumPy kernels at import time.
"""

import warnings

from setuptools import setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """build_ext that downgrades compilation failures to a warning."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover - depends on toolchain
            warnings.warn(f"compiled kernels skipped: {exc}")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover - depends on toolchain
            warnings.warn(f"compiled kernels skipped ({ext.name}): {exc}")


ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "entrospect.kernels._speedups",
                ["src/entrospect/kernels/_speedups.pyx"],
            )
        ],
        language_level="3",
    )
except ImportError:  # pragma: no cover - depends on toolchain
    warnings.warn("Cython not available, installing with pure Python kernels")

setup(ext_modules=ext_modules, cmdclass={"build_ext": optional_build_ext})
