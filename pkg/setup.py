from setuptools import setup, Extension
from Cython.Build import cythonize
import numpy as np


ext_module = Extension(
    "wanderlab.cantor._kernels",
    ["src/wanderlab/cantor/_kernels.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=["-O3"],
)


setup(
    ext_modules=cythonize(ext_module, language_level=3),
)
