"""Build script for the optional compiled kernel extension.

The package works without the extension (a pure numpy fallback is selected
at import time); compiling it makes long single chains much faster.  Set
ATMC_SKIP_EXTENSION=1 to force a pure-Python install.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the extension if possible, fall back to pure Python otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:
            print(f"warning: skipping compiled kernels ({exc}); "
                  "the pure-Python fallback will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: building {ext.name} failed ({exc}); "
                  "the pure-Python fallback will be used")


ext_modules = []
cmdclass = {}
if os.environ.get("ATMC_SKIP_EXTENSION") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [Extension(
                "atmc._kernels_c",
                ["src/atmc/_kernels.pyx"],
                extra_compile_args=["-O3"],
            )],
            language_level="3",
        )
        cmdclass["build_ext"] = OptionalBuildExt
    except ImportError:
        pass

setup(ext_modules=ext_modules, cmdclass=cmdclass)
