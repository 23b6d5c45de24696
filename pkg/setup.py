"""Build script: compiles the optional fast-kernel extension.

The compiled extension is an accelerator only. If Cython or a C compiler is
missing, installation proceeds and pondergrid.kernels falls back to the
NumPy implementations at import time.
"""

import warnings

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """build_ext that downgrades compiler failures to a warning."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            warnings.warn(f"skipping compiled kernels ({exc}); "
                          "falling back to NumPy kernels")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"failed to build {ext.name} ({exc}); "
                          "falling back to NumPy kernels")


def _march_native_ok():
    """Probe whether the C compiler accepts -march=native.

    The extension is built from source on the machine that runs it, so
    tuning for the local ISA is safe; anyone building portable binaries
    should clear PONDERGRID_MARCH_NATIVE.
    """
    import os
    import shutil
    import subprocess
    if os.environ.get("PONDERGRID_MARCH_NATIVE", "1") == "0":
        return False
    cc = os.environ.get("CC", "cc")
    if shutil.which(cc) is None:
        return False
    try:
        probe = subprocess.run(
            [cc, "-march=native", "-E", "-x", "c", os.devnull],
            stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL, timeout=30)
        return probe.returncode == 0
    except Exception:
        return False


def extensions():
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        return []
    args = ["-O3", "-fno-math-errno"]
    if _march_native_ok():
        args.append("-march=native")
    ext = Extension(
        "pondergrid.kernels._ckernels",
        ["src/pondergrid/kernels/_ckernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=args,
    )
    return cythonize([ext], language_level=3)


setup(
    ext_modules=extensions(),
    cmdclass={"build_ext": OptionalBuildExt},
)
