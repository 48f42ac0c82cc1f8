"""Spectral lifting of the vector results to symmetric matrices.

Projections onto PSD matrices of bounded rank (and the sign-free low-rank
set), plus normal-cone membership tests.  All operations eigendecompose with
the deterministic Jacobi solver and act on the eigenvalue vector exactly the
way the vector module acts on entries.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import MEMBERSHIP_TOL, zero_tol
from .errors import PreconditionError
from .linalg import check_symmetric, eig_sym, symmetrize


def _rank_cutoff(lam: np.ndarray) -> float:
    scale = float(np.max(np.abs(lam))) if lam.size else 0.0
    return zero_tol() * max(1.0, scale)


def rank_sym(x) -> int:
    """Rank of a symmetric matrix under the global eigenvalue tolerance."""
    lam = eig_sym(x).lam
    return int(np.sum(np.abs(lam) > _rank_cutoff(lam)))


def is_psd(x) -> bool:
    """PSD test: smallest eigenvalue above -1e-9 * (1 + norm)."""
    x = check_symmetric(x)
    lam = eig_sym(x).lam
    return bool(lam[-1] >= -MEMBERSHIP_TOL * (1.0 + float(np.linalg.norm(x))))


def validate_psd_low_rank(x, s: int, name: str = "Xbar") -> tuple:
    """Validate membership in the PSD rank-at-most-s set; return (X, decomp)."""
    x = check_symmetric(x, name)
    m = x.shape[0]
    s = int(s)
    if not 0 <= s <= m:
        raise ValueError(f"s={s} out of range [0, {m}]")
    dec = eig_sym(x)
    if dec.lam[-1] < -MEMBERSHIP_TOL * (1.0 + float(np.linalg.norm(x))):
        raise PreconditionError(f"{name} is not positive semidefinite")
    r = int(np.sum(np.abs(dec.lam) > _rank_cutoff(dec.lam)))
    if r > s:
        raise PreconditionError(f"{name} has rank {r} > s = {s}")
    return x, dec


def project_psd(x) -> np.ndarray:
    """Projection onto positive semidefinite matrices (clamp eigenvalues)."""
    dec = eig_sym(x)
    lam = np.maximum(dec.lam, 0.0)
    return symmetrize((dec.u.T * lam) @ dec.u)


def project_psd_low_rank(x, s: int) -> np.ndarray:
    """Canonical projection onto PSD matrices of rank at most ``s``: keep the
    ``s`` largest eigenvalues clamped at zero, drop the rest.

    The projection is set-valued only through eigenspace degeneracy; this
    returns the member produced by the deterministic eigensolver.  Use
    :func:`boundary_tie` to detect the degenerate case.
    """
    x = check_symmetric(x)
    m = x.shape[0]
    s = int(s)
    if not 0 <= s <= m:
        raise ValueError(f"s={s} out of range [0, {m}]")
    dec = eig_sym(x)
    lam = np.zeros(m)
    lam[:s] = np.maximum(dec.lam[:s], 0.0)
    return symmetrize((dec.u.T * lam) @ dec.u)


def project_low_rank(x, s: int) -> np.ndarray:
    """Canonical projection onto symmetric matrices of rank at most ``s``:
    keep the ``s`` eigenvalues largest in magnitude (ties broken by
    eigenvalue order)."""
    x = check_symmetric(x)
    m = x.shape[0]
    s = int(s)
    if not 0 <= s <= m:
        raise ValueError(f"s={s} out of range [0, {m}]")
    dec = eig_sym(x)
    keep = np.argsort(-np.abs(dec.lam), kind="stable")[:s]
    lam = np.zeros(m)
    lam[keep] = dec.lam[keep]
    return symmetrize((dec.u.T * lam) @ dec.u)


def boundary_tie(x, s: int) -> bool:
    """True when the clamped eigenvalues at positions ``s`` and ``s + 1``
    coincide within tolerance and are positive, i.e. the rank-``s``
    projection is set-valued at ``x``."""
    x = check_symmetric(x)
    m = x.shape[0]
    s = int(s)
    if s <= 0 or s >= m:
        return False
    lam = np.maximum(eig_sym(x).lam, 0.0)
    tol = MEMBERSHIP_TOL * (1.0 + float(np.linalg.norm(x)))
    return bool(lam[s - 1] > tol and lam[s - 1] - lam[s] <= tol)


@dataclass(frozen=True)
class MatrixConeReport:
    """Normal-cone membership outcome with diagnostics.

    ``residual`` is the Frobenius norm of ``Xbar @ Y``; ``y_eigenvalues`` the
    ordered spectrum of ``Y``.
    """

    is_member: bool
    branch: str  # "nsd-branch" | "low-rank-branch" | "both" | "none"
    residual: float
    y_eigenvalues: np.ndarray
    violated_condition: Optional[str] = None


def normal_cone_contains(xbar, y, s: int) -> MatrixConeReport:
    """Membership of ``Y`` in the normal cone to the PSD rank-at-most-``s``
    set at ``Xbar``.

    The cone is the union of directions annihilating ``Xbar`` that are either
    negative semidefinite or of rank at most ``m - s``.
    """
    xbar, _ = validate_psd_low_rank(xbar, s)
    y = check_symmetric(y, "Y")
    if y.shape != xbar.shape:
        raise ValueError("Xbar and Y must have the same dimension")
    m = xbar.shape[0]
    s = int(s)
    residual = float(np.linalg.norm(xbar @ y))
    dec = eig_sym(y)
    norm_x = float(np.linalg.norm(xbar))
    norm_y = float(np.linalg.norm(y))
    if residual > MEMBERSHIP_TOL * (1.0 + norm_x * norm_y):
        return MatrixConeReport(
            False, "none", residual, dec.lam, "Xbar @ Y is not zero"
        )
    nsd = bool(dec.lam[0] <= MEMBERSHIP_TOL * (1.0 + norm_y))
    rank_y = int(np.sum(np.abs(dec.lam) > _rank_cutoff(dec.lam)))
    low_rank = rank_y <= m - s
    if nsd and low_rank:
        return MatrixConeReport(True, "both", residual, dec.lam)
    if nsd:
        return MatrixConeReport(True, "nsd-branch", residual, dec.lam)
    if low_rank:
        return MatrixConeReport(True, "low-rank-branch", residual, dec.lam)
    return MatrixConeReport(
        False,
        "none",
        residual,
        dec.lam,
        f"Y is not NSD and rank(Y) = {rank_y} > m - s = {m - s}",
    )


def low_rank_normal_cone_contains(xbar, y, s: int) -> bool:
    """Membership of ``Y`` in the normal cone to the sign-free rank-at-most-
    ``s`` set at ``Xbar``, which must have rank exactly ``s`` (the formula is
    only available at maximal rank): the condition is ``Xbar @ Y = 0``."""
    xbar = check_symmetric(xbar, "Xbar")
    y = check_symmetric(y, "Y")
    if y.shape != xbar.shape:
        raise ValueError("Xbar and Y must have the same dimension")
    s = int(s)
    r = rank_sym(xbar)
    if r != s:
        raise PreconditionError(
            f"Xbar has rank {r} != s = {s}; the normal-cone formula requires "
            "maximal rank"
        )
    residual = float(np.linalg.norm(xbar @ y))
    return bool(
        residual
        <= MEMBERSHIP_TOL
        * (1.0 + float(np.linalg.norm(xbar)) * float(np.linalg.norm(y)))
    )


def prox_normal_cone_contains(xbar, y, s: int) -> bool:
    """Membership of ``Y`` in the proximal normal cone at ``Xbar``: below
    maximal rank this is the PSD-cone normal cone (``Xbar @ Y = 0`` and ``Y``
    NSD); at maximal rank only ``Xbar @ Y = 0`` is required."""
    xbar, dec = validate_psd_low_rank(xbar, s)
    y = check_symmetric(y, "Y")
    if y.shape != xbar.shape:
        raise ValueError("Xbar and Y must have the same dimension")
    r = int(np.sum(np.abs(dec.lam) > _rank_cutoff(dec.lam)))
    residual = float(np.linalg.norm(xbar @ y))
    comp = residual <= MEMBERSHIP_TOL * (
        1.0 + float(np.linalg.norm(xbar)) * float(np.linalg.norm(y))
    )
    if not comp:
        return False
    if r == int(s):
        return True
    lam_max = float(eig_sym(y).lam[0])
    return bool(lam_max <= MEMBERSHIP_TOL * (1.0 + float(np.linalg.norm(y))))
