"""Build script: compiles the optional grid-kernel extension.

The package works without the extension (a numpy fallback is selected at
import); the build therefore tolerates a missing compiler or Cython.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/duality_lab/_kernels/_grid.pyx",
        compiler_directives={"language_level": "3"},
    )
    include_dirs = [numpy.get_include()]
except ImportError:  # pure-Python install
    include_dirs = []

setup(ext_modules=ext_modules, include_dirs=include_dirs)
