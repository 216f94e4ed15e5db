"""Build script: compiles the power-flow sweep kernel when Cython and a C
compiler are available, otherwise installs pure Python only (the package
falls back to the interpreted kernel at import time).
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "dercc.powerflow._sweep_cy",
                ["src/dercc/powerflow/_sweep_cy.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
