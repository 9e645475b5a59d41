"""blocktri: block-tridiagonal dichotomy solvers with a domain-decomposition
layer and a desk-scale Laguerre-transform acoustic demonstrator.

Numerical hot loops live in a compiled extension when available; see
:mod:`blocktri.backend` for the selection rule.
"""

from .backend import backend_name
from .core import (
    BlockLU,
    BlockTriMatrix,
    BlockVector,
    ThomasFactorization,
    dense_expand,
    lu_factor,
    lu_solve,
    thomas_factor,
    thomas_solve,
)

__version__ = "0.1.0"

__all__ = [
    "BlockLU",
    "BlockTriMatrix",
    "BlockVector",
    "ThomasFactorization",
    "backend_name",
    "dense_expand",
    "lu_factor",
    "lu_solve",
    "thomas_factor",
    "thomas_solve",
]
