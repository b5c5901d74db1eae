"""Build the optional compiled geometry kernels.

The package works without them; ``pepperharvest.geometry.kernels`` falls
back to the numpy implementation when the extension is absent.
"""
from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension
except ImportError:  # no Cython: pure-Python install
    pass
else:
    ext_modules = cythonize(
        [
            Extension(
                "pepperharvest.geometry._kernels",
                ["src/pepperharvest/geometry/_kernels.pyx"],
                include_dirs=[np.get_include()],
                language="c++",
                extra_compile_args=["-O3", "-ffp-contract=off"],
                optional=True,
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
