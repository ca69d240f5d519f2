"""Build the optional Cython sweep kernels.

The package works without the extension (a pure-Python fallback is selected
at import time), so a missing Cython or a failed compile only costs speed,
never functionality.
"""

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Swallow compiler failures; the fallback kernels take over."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001 - any toolchain failure
            print(f"warning: skipping compiled kernels ({exc}); "
                  "the pure-Python fallback will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: could not build {ext.name} ({exc}); "
                  "the pure-Python fallback will be used")


ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "implicitad._sweepcore",
                ["src/implicitad/_sweepcore.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
except ImportError:
    print("warning: Cython unavailable; building without compiled kernels")

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
