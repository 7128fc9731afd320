"""Selects the compiled kernel module when available.

Set ``QTHERM_BACKEND=python`` to force the pure-Python fallback.
"""
import os

from . import _kernels_py

python_kernels = _kernels_py
compiled_kernels = None

try:
    from . import _kernels as compiled_kernels  # type: ignore[no-redef]
except ImportError:  # extension not built
    compiled_kernels = None

if compiled_kernels is not None and os.environ.get("QTHERM_BACKEND", "").lower() != "python":
    kernels = compiled_kernels
    BACKEND = "cython"
else:
    kernels = _kernels_py
    BACKEND = "python"
