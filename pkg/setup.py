"""Builds the optional compiled simulator kernel; the package works without it."""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension(
            "diac.sim._ckernel",
            ["src/diac/sim/_ckernel.pyx"],
            # no FMA contraction: results must match the Python kernel bit for bit
            extra_compile_args=["-O2", "-ffp-contract=off"],
        )],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
