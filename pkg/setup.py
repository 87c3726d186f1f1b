"""Build script.

The closed-loop simulation kernel has two interchangeable implementations:
a Cython extension (palmtherm._kernel._fast) and a pure-Python reference
(palmtherm._kernel._ref).  The extension is optional: if Cython or a C
compiler is unavailable the package installs anyway and falls back to the
reference kernel at import time.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    # -ffp-contract=off keeps the C arithmetic bit-comparable with the
    # pure-Python reference kernel (no FMA contraction).
    ext_modules = cythonize(
        [
            "src/palmtherm/_kernel/_fast.pyx",
        ],
        compiler_directives={"language_level": "3"},
    )
    for ext in ext_modules:
        ext.extra_compile_args = ["-O2", "-ffp-contract=off"]
except Exception as exc:  # pragma: no cover - build-environment dependent
    sys.stderr.write(f"warning: compiled kernel skipped ({exc}); "
                     "using pure-Python fallback\n")
    ext_modules = []

setup(ext_modules=ext_modules)
