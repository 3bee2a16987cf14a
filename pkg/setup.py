import numpy as np
from setuptools import Extension, setup
from Cython.Build import cythonize

# The compiled kernels are optional: if the build fails the package still
# works through the pure-numpy fallback in fanfreq.kernels.pure.
extensions = [
    Extension(
        "fanfreq.kernels._core",
        ["src/fanfreq/kernels/_core.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3", "-march=native"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
