"""Dense small-scale linear algebra used throughout the library.

Symmetric eigendecomposition (cyclic threshold Jacobi, deterministic),
orthonormal subspaces with coordinate-restricted null-space dimensions, and a
phase-1 simplex kernel that decides whether a subspace contains a nonzero
nonnegative vector.  Everything here is sized for desk-scale problems
(dimensions in the low hundreds).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .config import zero_tol
from .errors import NumericalError

_SYM_TOL = 1e-12
_MAX_SWEEPS = 100


def symmetrize(x: np.ndarray) -> np.ndarray:
    """Return the symmetric part 0.5 * (x + x^T) as a float copy."""
    x = np.asarray(x, dtype=float)
    return 0.5 * (x + x.T)


def check_symmetric(x, name: str = "matrix") -> np.ndarray:
    """Validate that ``x`` is square and symmetric; return a symmetrized copy.

    Asymmetry up to roundoff (1e-12 relative) is tolerated and averaged away;
    anything larger raises ``ValueError``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError(f"{name} must be square, got shape {x.shape}")
    scale = float(np.max(np.abs(x))) if x.size else 0.0
    asym = float(np.max(np.abs(x - x.T))) if x.size else 0.0
    if asym > _SYM_TOL * (1.0 + scale):
        raise ValueError(f"{name} is not symmetric (max asymmetry {asym:.3e})")
    return symmetrize(x)


@dataclass(frozen=True)
class EigenDecomp:
    """Ordered spectral decomposition ``x = u.T @ diag(lam) @ u``.

    Rows of ``u`` are the eigenvectors; ``lam`` is non-increasing.  Signs are
    fixed so the first non-negligible component of each eigenvector is
    positive, which makes the decomposition deterministic.
    """

    u: np.ndarray
    lam: np.ndarray

    @property
    def dim(self) -> int:
        return self.lam.shape[0]

    def reconstruct(self) -> np.ndarray:
        return symmetrize((self.u.T * self.lam) @ self.u)


def eig_sym(x, max_sweeps: int = _MAX_SWEEPS) -> EigenDecomp:
    """Eigendecomposition of a symmetric matrix by cyclic threshold Jacobi.

    Deterministic for identical input: fixed row-major sweep order and a fixed
    sign convention.  Raises :class:`NumericalError` if the off-diagonal norm
    has not vanished after ``max_sweeps`` sweeps.
    """
    a = check_symmetric(x)
    n = a.shape[0]
    w = np.eye(n)
    scale = float(np.linalg.norm(a))
    target = 1e-14 * max(1.0, scale)
    off = _offdiag_norm(a)
    for _ in range(max_sweeps):
        if off <= target:
            break
        # Threshold sweep: only rotate pairs that still carry a meaningful
        # share of the remaining off-diagonal mass.
        thresh = off / (n * n)
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= thresh:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                cp = a[:, p].copy()
                cq = a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = 0.0
                a[q, p] = 0.0
                wp = w[:, p].copy()
                wq = w[:, q].copy()
                w[:, p] = c * wp - s * wq
                w[:, q] = s * wp + c * wq
        off = _offdiag_norm(a)
    else:
        raise NumericalError(
            f"jacobi eigensolver did not converge: off-diagonal residual "
            f"{off:.3e} after {max_sweeps} sweeps"
        )
    d = np.diag(a).copy()
    order = np.argsort(-d, kind="stable")
    lam = d[order]
    u = np.ascontiguousarray(w[:, order].T)
    for i in range(n):
        nz = np.flatnonzero(np.abs(u[i]) > 1e-12)
        if nz.size and u[i, nz[0]] < 0.0:
            u[i] = -u[i]
    return EigenDecomp(u=u, lam=lam)


def _offdiag_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a - np.diag(np.diag(a))))


def hadamard(x, y) -> np.ndarray:
    """Entrywise product of two vectors of equal length."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    return x * y


def sort_desc(x) -> np.ndarray:
    """Entries of ``x`` permuted into non-increasing order."""
    x = np.asarray(x, dtype=float)
    return -np.sort(-x)


@dataclass(frozen=True)
class Subspace:
    """A linear subspace of R^n stored as orthonormal basis rows."""

    ambient_dim: int
    basis: np.ndarray  # (dim, ambient_dim), orthonormal rows

    @classmethod
    def span(cls, vectors) -> "Subspace":
        """Subspace spanned by the given vectors (rows), orthonormalized.

        Directions with singular value at most ``zero_tol * max(1, sigma_1)``
        are dropped.
        """
        va = np.atleast_2d(np.asarray(vectors, dtype=float))
        n = va.shape[1]
        if va.size == 0 or not np.any(va):
            return cls(ambient_dim=n, basis=np.zeros((0, n)))
        _, sv, vt = np.linalg.svd(va, full_matrices=False)
        cutoff = zero_tol() * max(1.0, float(sv[0]))
        r = int(np.sum(sv > cutoff))
        return cls(ambient_dim=n, basis=vt[:r].copy())

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def project(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return self.basis.T @ (self.basis @ y)

    def contains(self, y, tol: float = 1e-8) -> bool:
        y = np.asarray(y, dtype=float)
        return float(np.linalg.norm(y - self.project(y))) <= tol * (
            1.0 + float(np.linalg.norm(y))
        )


def null_intersection_basis(v: Subspace, coords: Iterable[int]) -> np.ndarray:
    """Orthonormal basis rows of ``v`` intersected with the coordinate
    subspace ``{y : y_j = 0 for all j not in coords}``.  Indices are 0-based.
    """
    coords = set(int(j) for j in coords)
    if not coords <= set(range(v.ambient_dim)):
        raise ValueError("coords out of range")
    k = v.dim
    if k == 0:
        return np.zeros((0, v.ambient_dim))
    complement = sorted(set(range(v.ambient_dim)) - coords)
    if not complement:
        return v.basis.copy()
    m = v.basis[:, complement]  # k x |complement|; need c with c @ m = 0
    u, sv, _ = np.linalg.svd(m, full_matrices=True)
    cutoff = zero_tol() * max(1.0, float(sv[0]) if sv.size else 0.0)
    r = int(np.sum(sv > cutoff))
    c = u[:, r:].T  # (k - r) x k, orthonormal coefficient rows
    return c @ v.basis


def null_intersection_dim(v: Subspace, coords: Iterable[int]) -> int:
    """Dimension of ``v`` intersected with ``{y : y_j = 0 off coords}``."""
    return null_intersection_basis(v, coords).shape[0]


def lp_cone_point(
    v: Subspace, zero_coords: Iterable[int] = (), feas_tol: float = 1e-9
):
    """A vector y in ``v`` with y >= 0, sum(y) = 1 and y zero on
    ``zero_coords``, or ``None`` if no such vector exists.

    Decided by a phase-1 simplex with Bland's rule on the equality form; the
    feasibility margin is ``feas_tol``.
    """
    n = v.ambient_dim
    k = v.dim
    zero = sorted(set(int(j) for j in zero_coords))
    if not set(zero) <= set(range(n)):
        raise ValueError("zero_coords out of range")
    if k == 0:
        return None
    free = [j for j in range(n) if j not in zero]
    f = len(free)
    if f == 0:
        return None
    b_free = v.basis[:, free]  # k x f
    b_zero = v.basis[:, zero]  # k x |zero|
    # variables: [y_free (f), u (k), w (k)] with coefficients c = u - w
    rows = f + len(zero) + 1
    cols = f + 2 * k
    a_eq = np.zeros((rows, cols))
    b_eq = np.zeros(rows)
    a_eq[:f, :f] = np.eye(f)
    a_eq[:f, f : f + k] = -b_free.T
    a_eq[:f, f + k :] = b_free.T
    if zero:
        a_eq[f : f + len(zero), f : f + k] = b_zero.T
        a_eq[f : f + len(zero), f + k :] = -b_zero.T
    a_eq[-1, :f] = 1.0
    b_eq[-1] = 1.0
    x = _phase1_simplex(a_eq, b_eq, feas_tol=feas_tol)
    if x is None:
        return None
    y = np.zeros(n)
    y[free] = x[:f]
    return y


def lp_cone_nontrivial(
    v: Subspace, zero_coords: Iterable[int] = (), feas_tol: float = 1e-9
) -> bool:
    """True iff ``v`` contains a nonzero nonnegative vector vanishing on
    ``zero_coords`` (normalized so its entries sum to 1)."""
    return lp_cone_point(v, zero_coords, feas_tol=feas_tol) is not None


def _phase1_simplex(a_eq, b_eq, feas_tol: float = 1e-9, maxiter: int | None = None):
    """Feasible point of {x >= 0 : a_eq x = b_eq} or None.

    Full-tableau phase-1 with artificial variables, minimizing their sum under
    Bland's rule (entering: lowest-index negative reduced cost; leaving:
    lowest-index among minimum-ratio ties), which rules out cycling.
    """
    a = np.asarray(a_eq, dtype=float)
    b = np.asarray(b_eq, dtype=float).copy()
    m, n = a.shape
    a = a.copy()
    neg = b < 0
    a[neg] *= -1.0
    b[neg] *= -1.0
    if maxiter is None:
        maxiter = 1000 + 50 * (m + n)
    # tableau: [A | I | b] with phase-1 cost row beneath
    t = np.zeros((m + 1, n + m + 1))
    t[:m, :n] = a
    t[:m, n : n + m] = np.eye(m)
    t[:m, -1] = b
    t[-1, :n] = -a.sum(axis=0)
    t[-1, -1] = -b.sum()
    basis = list(range(n, n + m))
    pivot_tol = 1e-11
    for _ in range(maxiter):
        costs = t[-1, : n + m]
        entering = -1
        for j in range(n + m):
            if costs[j] < -pivot_tol:
                entering = j
                break
        if entering < 0:
            break
        col = t[:m, entering]
        best_ratio = None
        leaving = -1
        for i in range(m):
            if col[i] > pivot_tol:
                ratio = t[i, -1] / col[i]
                if (
                    best_ratio is None
                    or ratio < best_ratio - 1e-12
                    or (abs(ratio - best_ratio) <= 1e-12 and basis[i] < basis[leaving])
                ):
                    best_ratio = ratio
                    leaving = i
        if leaving < 0:
            raise NumericalError("phase-1 simplex found an unbounded direction")
        piv = t[leaving, entering]
        t[leaving] /= piv
        for i in range(m + 1):
            if i != leaving and t[i, entering] != 0.0:
                t[i] -= t[i, entering] * t[leaving]
        basis[leaving] = entering
    else:
        raise NumericalError(f"phase-1 simplex iteration cap {maxiter} exceeded")
    objective = -t[-1, -1]
    if objective > feas_tol:
        return None
    x = np.zeros(n)
    for i, j in enumerate(basis):
        if j < n:
            x[j] = t[i, -1]
    return x
