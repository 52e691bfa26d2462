"""Build script for the optional compiled kernel extension.

The package is fully functional without the extension; `urlgraphnet.kernels`
falls back to the numpy implementation when the compiled module is missing.
"""

import os
import sys

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

PYX = "src/urlgraphnet/_kernels_cy.pyx"

# -ffast-math lets gcc vectorize the sigmoid/tanh loops through libmvec.
# It is confined to this extension; results still match the numpy fallback
# to a few ulps (covered by the cross-backend tests).  Set
# URLGRAPHNET_NATIVE=1 at build time to additionally tune for the local CPU.
compile_args = ["-O3", "-ffast-math"]
link_args = ["-lmvec"] if sys.platform == "linux" else []
if os.environ.get("URLGRAPHNET_NATIVE"):
    compile_args.append("-march=native")

extensions = [
    Extension(
        "urlgraphnet._kernels_cy",
        [PYX],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=compile_args,
        extra_link_args=link_args,
        optional=True,
    )
]

setup(
    ext_modules=(
        cythonize(extensions, language_level="3")
        if cythonize and os.path.exists(PYX)
        else []
    ),
)
