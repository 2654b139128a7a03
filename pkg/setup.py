import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    # The compiled sweep kernel is optional: if the build fails the package
    # installs anyway and falls back to the pure-numpy kernel at import.
    ext_modules = cythonize(
        [
            Extension(
                "sparsemix._icf_cy",
                ["src/sparsemix/_icf_cy.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )
else:
    ext_modules = []

setup(ext_modules=ext_modules)
