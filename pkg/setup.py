# Builds the optional compiled kernel extension. The package works without it
# (plotsearch.kernels falls back to the numpy implementation at import time),
# so any failure here downgrades to a pure-Python install instead of aborting.
from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/plotsearch/kernels/_fastk.pyx",
        compiler_directives={"language_level": "3"},
    )
    include_dirs = [numpy.get_include()]
except Exception as exc:  # pragma: no cover - build-env dependent
    print(f"plotsearch: skipping compiled kernels ({exc}); pure-Python fallback will be used")
    include_dirs = []

setup(ext_modules=ext_modules, include_dirs=include_dirs)
