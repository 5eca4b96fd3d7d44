"""Prioritized (lexicographic) nonlinear least-squares toolkit.

Solves ordered stacks of nonlinear least-squares levels with an ADMM
sub-solver projected into the nullspace of active higher-priority
constraints, using a turnback algorithm for sparse nullspace bases of
Euler-integrated dynamics.
"""

from ._kernels import backend as kernel_backend
from .numerics import SparseMatrix

__version__ = "0.1.0"

__all__ = ["SparseMatrix", "kernel_backend", "__version__"]
