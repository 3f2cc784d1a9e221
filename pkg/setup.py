"""Build script for the compiled accumulation kernel.

The pure-Python package works without the extension; fedwd._kernels falls
back to a numpy implementation if the compiled module is absent.
"""

from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "fedwd._kernels._core",
        ["src/fedwd/_kernels/_core.pyx"],
    )
]

setup(ext_modules=cythonize(extensions, language_level="3"))
