"""Build hook for the optional compiled simulator kernel.

Without Cython (or a C compiler) the package still installs and falls back
to the pure-Python kernel at import time.
"""
import numpy as np
from setuptools import setup

try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [Extension("ksddpg.sim._simcore", ["src/ksddpg/sim/_simcore.pyx"],
                   include_dirs=[np.get_include()], extra_compile_args=["-O3"])],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
