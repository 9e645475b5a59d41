"""Kernel backend selection.

The compiled Cython extension is preferred when importable; otherwise the
pure-numpy twin is used. ``BLOCKTRI_BACKEND=python|compiled`` forces a choice
(``compiled`` raises if the extension is missing, so CI can pin it).
"""

import os

from . import _kernels_py

_FORCED = os.environ.get("BLOCKTRI_BACKEND", "").strip().lower()

if _FORCED == "python":
    kernels = _kernels_py
elif _FORCED == "compiled":
    from . import _kernels as kernels  # noqa: F401  (ImportError is the contract)
else:
    try:
        from . import _kernels as kernels
    except ImportError:
        kernels = _kernels_py


def backend_name():
    """'compiled' when the Cython kernels are active, else 'python'."""
    return "compiled" if kernels.IS_COMPILED else "python"


lu_factor = kernels.lu_factor
lu_solve = kernels.lu_solve
thomas_factor = kernels.thomas_factor
thomas_solve = kernels.thomas_solve
