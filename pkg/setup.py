from setuptools import setup

# The compiled kernels are optional: the package falls back to the pure
# numpy backend when the extension is unavailable.
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/mptorder/_kernels/_core.pyx"],
        language_level="3",
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
