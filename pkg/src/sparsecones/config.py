"""Global numerical tolerances.

A single zero tolerance governs every support / rank / sparsity decision in
the library: an entry (or eigenvalue) of magnitude at most
``zero_tol() * (1 + scale)`` counts as zero, where ``scale`` is the max-norm
of the containing vector or matrix.  The default can be overridden with the
``SPARSECONES_ZERO_TOL`` environment variable or :func:`set_zero_tol`.
"""

from __future__ import annotations

import os

import numpy as np

DEFAULT_ZERO_TOL = 1e-10

# Looser tolerance for residual-style membership checks (products that should
# vanish, PSD-ness of computed matrices).
MEMBERSHIP_TOL = 1e-9

_zero_tol = float(os.environ.get("SPARSECONES_ZERO_TOL", DEFAULT_ZERO_TOL))
if _zero_tol <= 0.0:
    raise ValueError("SPARSECONES_ZERO_TOL must be positive")


def zero_tol() -> float:
    """Current global zero tolerance."""
    return _zero_tol


def set_zero_tol(value: float) -> None:
    """Override the global zero tolerance (must be positive)."""
    global _zero_tol
    value = float(value)
    if value <= 0.0:
        raise ValueError("zero tolerance must be positive")
    _zero_tol = value


def zero_cutoff(a) -> float:
    """Absolute cutoff below which entries of ``a`` count as zero."""
    a = np.asarray(a, dtype=float)
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    return _zero_tol * (1.0 + scale)
