"""Build script for the optional compiled TreeSHAP kernel.

The extension is marked optional: if Cython or a C compiler is missing the
install still succeeds and the package falls back to the pure-Python kernel.
No -ffast-math: the compiled kernel must be bit-identical to the fallback.
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "shapsel._kernels._treeshap_cy",
                ["src/shapsel/_kernels/_treeshap_cy.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O2"],
                optional=True,
            )
        ],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
