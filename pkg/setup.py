import os

from setuptools import setup

ext_modules = []
if os.environ.get("PORTHOS_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            ["src/porthos/_relkernel.pyx"],
            compiler_directives={"language_level": "3"},
            quiet=True,
        )
    except ImportError:
        pass

setup(ext_modules=ext_modules)
