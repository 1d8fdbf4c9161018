"""Build script: compiles the optional Cython stepping kernel.

The package works without the extension (a numpy fallback is selected at
import time), so any failure here degrades to a pure-Python install
instead of aborting. Set KIMURA_LAB_NO_EXT=1 to skip the build outright.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class _OptionalBuildExt(build_ext):
    """Swallow compiler failures; the runtime falls back to numpy kernels."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001 - any build failure is non-fatal
            print(f"warning: skipping optional extension build: {exc}")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: failed to build {ext.name}: {exc}")


def _extensions():
    if os.environ.get("KIMURA_LAB_NO_EXT") == "1":
        return []
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    return cythonize(
        [
            Extension(
                "kimura_lab._kernels._core",
                ["src/kimura_lab/_kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )


setup(ext_modules=_extensions(), cmdclass={"build_ext": _OptionalBuildExt})
