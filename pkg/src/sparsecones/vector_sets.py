"""Projections and normal cones for nonnegative sparse vectors.

The central set is the collection of nonnegative vectors with at most ``s``
nonzero entries.  Projections onto it are set-valued; results carry the full
(deduplicated) member set up to a cap, a deterministic canonical member, and
the common distance.  Normal-cone membership is decided by the two-branch
formula: directions that are complementary to the point and either
nonpositive or supported on at most ``m - s`` coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb
from typing import Optional

import numpy as np

from .config import zero_cutoff
from .linalg import sort_desc

MEMBER_CAP = 512

_BRANCH_NONPOS = "nonpositive-branch"
_BRANCH_SPARSITY = "sparsity-branch"


def support_indices(x) -> np.ndarray:
    """Indices of entries that are nonzero under the global tolerance."""
    x = np.asarray(x, dtype=float)
    return np.flatnonzero(np.abs(x) > zero_cutoff(x))


def sparsity(x) -> int:
    """Number of nonzero entries under the global tolerance."""
    return int(support_indices(x).size)


@dataclass(frozen=True)
class SparseVecPoint:
    """A vector with cached support and an optional sparsity bound."""

    x: np.ndarray
    support: tuple
    s_level: Optional[int] = None

    @classmethod
    def from_array(cls, x, s_level: Optional[int] = None) -> "SparseVecPoint":
        x = np.asarray(x, dtype=float)
        if s_level is not None and not 0 <= s_level <= x.size:
            raise ValueError(f"s_level {s_level} out of range [0, {x.size}]")
        return cls(x=x, support=tuple(support_indices(x)), s_level=s_level)


def _as_vector(x) -> np.ndarray:
    return np.asarray(getattr(x, "x", x), dtype=float)


@dataclass(frozen=True)
class ProjectionResult:
    """Set-valued projection output.

    ``members`` holds the full deduplicated set when its size is at most the
    cap, otherwise just the canonical member; ``member_count`` is always the
    true count.  All members are equidistant from the input.
    """

    members: tuple
    canonical: np.ndarray
    distance: float
    member_count: int

    @property
    def truncated(self) -> bool:
        return self.member_count > len(self.members)


def project_nonneg(x) -> np.ndarray:
    """Pointwise maximum with zero."""
    return np.maximum(_as_vector(x), 0.0)


def _require_s(s: int, m: int) -> int:
    s = int(s)
    if not 0 <= s <= m:
        raise ValueError(f"s={s} out of range [0, {m}]")
    return s


def _enumerate_members(values, keep_always, tied, slots, member_cap):
    """Member vectors keeping ``keep_always`` plus ``slots`` of ``tied``."""
    total = comb(len(tied), slots)
    if total > member_cap:
        return None, total
    members = []
    for combo in combinations(tied, slots):
        y = np.zeros_like(values)
        y[keep_always] = values[keep_always]
        y[list(combo)] = values[list(combo)]
        members.append(y)
    return tuple(members), total


def project_sparse_nonneg(x, s: int, member_cap: int = MEMBER_CAP) -> ProjectionResult:
    """Projection onto nonnegative vectors with at most ``s`` nonzeros.

    Equals the sparse projection of the nonnegative part: keep the ``s``
    largest entries of ``max(x, 0)`` and zero the rest, enumerating all exact
    value ties.  The canonical member keeps the lexicographically smallest
    index set under (value descending, index ascending) order.
    """
    x = _as_vector(x)
    m = x.size
    s = _require_s(s, m)
    xp = np.maximum(x, 0.0)
    if s == 0:
        y = np.zeros(m)
        return ProjectionResult((y,), y, float(np.linalg.norm(x)), 1)
    order = np.argsort(-xp, kind="stable")
    threshold = xp[order[s - 1]]
    if threshold == 0.0:
        # fewer than s positive entries: the unique member keeps them all
        y = xp.copy()
        return ProjectionResult((y,), y, float(np.linalg.norm(x - y)), 1)
    above = np.flatnonzero(xp > threshold)
    tied = np.flatnonzero(xp == threshold)
    slots = s - above.size
    members, total = _enumerate_members(xp, above, tied.tolist(), slots, member_cap)
    canonical = np.zeros(m)
    canonical[order[:s]] = xp[order[:s]]
    if members is None:
        members = (canonical,)
    distance = float(np.linalg.norm(x - canonical))
    return ProjectionResult(members, canonical, distance, total)


def project_sparse(x, s: int, member_cap: int = MEMBER_CAP) -> ProjectionResult:
    """Projection onto vectors with at most ``s`` nonzeros (no sign
    constraint): keep the ``s`` entries largest in magnitude, enumerating all
    exact magnitude ties."""
    x = _as_vector(x)
    m = x.size
    s = _require_s(s, m)
    if s == 0:
        y = np.zeros(m)
        return ProjectionResult((y,), y, float(np.linalg.norm(x)), 1)
    mag = np.abs(x)
    order = np.argsort(-mag, kind="stable")
    threshold = mag[order[s - 1]]
    if threshold == 0.0:
        y = x.copy()
        return ProjectionResult((y,), y, 0.0, 1)
    above = np.flatnonzero(mag > threshold)
    tied = np.flatnonzero(mag == threshold)
    slots = s - above.size
    members, total = _enumerate_members(x, above, tied.tolist(), slots, member_cap)
    canonical = np.zeros(m)
    canonical[order[:s]] = x[order[:s]]
    if members is None:
        members = (canonical,)
    distance = float(np.linalg.norm(x - canonical))
    return ProjectionResult(members, canonical, distance, total)


def top_s_nonneg(x, s: int) -> np.ndarray:
    """Canonical member of :func:`project_sparse_nonneg` without the
    set-valued bookkeeping (used in solver hot loops)."""
    x = _as_vector(x)
    s = _require_s(s, x.size)
    xp = np.maximum(x, 0.0)
    if s == 0:
        return np.zeros_like(xp)
    order = np.argsort(-xp, kind="stable")
    y = np.zeros_like(xp)
    keep = order[:s]
    y[keep] = xp[keep]
    return y


def sparse_nonneg_tie(x, s: int) -> bool:
    """True when the projection onto the nonnegative ``s``-sparse set is
    set-valued at ``x`` (a value tie at the cut, with a positive cut)."""
    x = _as_vector(x)
    s = _require_s(s, x.size)
    if s == 0 or s == x.size:
        return False
    xp = np.maximum(x, 0.0)
    srt = np.sort(xp)[::-1]
    return bool(srt[s - 1] > 0.0 and srt[s - 1] == srt[s])


def decomposition_check(x, y, s: int) -> bool:
    """Whether ``y`` splits off ``x`` as a projection onto the nonnegative
    ``s``-sparse set.

    With ``z = x - y``, tests the three conditions: ``y`` in the set, ``y``
    and ``z`` with disjoint supports, and the ``s``-th largest entry of ``y``
    at least the largest entry of ``z``.  Equivalent to membership of ``y``
    in the set-valued projection of ``x``.
    """
    x = _as_vector(x)
    y = _as_vector(y)
    if x.shape != y.shape:
        raise ValueError("x and y must have equal length")
    m = x.size
    s = _require_s(s, m)
    z = x - y
    cy = zero_cutoff(y)
    if s == 0:
        return bool(np.all(np.abs(y) <= cy))
    # y in the set: nonnegative up to tolerance, at most s nonzeros
    if np.min(y, initial=0.0) < -cy:
        return False
    if sparsity(y) > s:
        return False
    # disjoint supports
    cz = zero_cutoff(z)
    if np.any((np.abs(y) > cy) & (np.abs(z) > cz)):
        return False
    ys = sort_desc(y)[s - 1]
    z1 = float(np.max(z)) if m else 0.0
    slack = 1e-12 * (1.0 + float(np.max(np.abs(x))))
    return bool(ys >= z1 - slack)


def _validate_in_set(x, s: int, name: str) -> np.ndarray:
    x = _as_vector(x)
    s = _require_s(s, x.size)
    if np.min(x, initial=0.0) < -zero_cutoff(x):
        raise ValueError(f"{name} has negative entries")
    if sparsity(x) > s:
        raise ValueError(f"{name} has more than s={s} nonzero entries")
    return x


def inverse_projection_contains(y, x, s: int) -> bool:
    """Whether ``x`` projects onto ``y`` (i.e. ``y`` is a member of the
    projection of ``x``), decided by the inverse-projection formulas.

    At maximal sparsity the test is agreement on the support of ``y``
    together with the support values dominating the clipped off-support
    entries of ``x``; below maximal sparsity it is ``max(x, 0) == y``.
    """
    y = _validate_in_set(y, s, "y")
    x = _as_vector(x)
    if x.shape != y.shape:
        raise ValueError("x and y must have equal length")
    eqtol = 1e-10 * (1.0 + float(np.max(np.abs(y), initial=0.0)))
    supp = support_indices(y)
    if supp.size == s:
        if s == 0:
            # projecting onto the zero set maps everything to zero
            return True
        if np.any(np.abs(x[supp] - y[supp]) > eqtol):
            return False
        off = np.setdiff1d(np.arange(x.size), supp)
        if off.size == 0:
            return True
        return bool(np.min(y[supp]) >= np.max(np.maximum(x[off], 0.0)) - eqtol)
    return bool(np.all(np.abs(np.maximum(x, 0.0) - y) <= eqtol))


@dataclass(frozen=True)
class ConeMembershipReport:
    """Outcome of a normal-cone membership test with the branch that holds."""

    is_member: bool
    branch: str  # "nonpositive-branch" | "sparsity-branch" | "both" | "none"
    violated_condition: Optional[str] = None


def normal_cone_contains(xbar, y, s: int) -> ConeMembershipReport:
    """Membership of ``y`` in the normal cone to the nonnegative
    ``s``-sparse set at ``xbar``.

    The cone is the union of two branches over directions complementary to
    ``xbar``: nonpositive directions, and directions with at most ``m - s``
    nonzero entries.  Reports every branch that holds.
    """
    xbar = _validate_in_set(xbar, s, "xbar")
    y = _as_vector(y)
    if xbar.shape != y.shape:
        raise ValueError("xbar and y must have equal length")
    m = xbar.size
    s = int(s)
    cx = zero_cutoff(xbar)
    cy = zero_cutoff(y)
    shared = np.flatnonzero((np.abs(xbar) > cx) & (np.abs(y) > cy))
    if shared.size:
        j = int(shared[0])
        return ConeMembershipReport(
            False, "none", f"xbar and y are both nonzero at index {j}"
        )
    nonpos = bool(np.max(y, initial=0.0) <= cy)
    k = sparsity(y)
    sparse_ok = k <= m - s
    if nonpos and sparse_ok:
        return ConeMembershipReport(True, "both")
    if nonpos:
        return ConeMembershipReport(True, _BRANCH_NONPOS)
    if sparse_ok:
        return ConeMembershipReport(True, _BRANCH_SPARSITY)
    return ConeMembershipReport(
        False,
        "none",
        f"y has positive entries and {k} nonzeros > m - s = {m - s}",
    )


def prox_normal_cone_contains(xbar, y, s: int) -> bool:
    """Membership of ``y`` in the proximal normal cone at ``xbar``: the
    nonnegative-orthant cone below maximal sparsity, the full normal cone at
    maximal sparsity."""
    xbar = _validate_in_set(xbar, s, "xbar")
    y = _as_vector(y)
    if xbar.shape != y.shape:
        raise ValueError("xbar and y must have equal length")
    cx = zero_cutoff(xbar)
    cy = zero_cutoff(y)
    if np.any((np.abs(xbar) > cx) & (np.abs(y) > cy)):
        return False
    if sparsity(xbar) == s:
        return True
    return bool(np.max(y, initial=0.0) <= cy)


def normal_cone_sample(xbar, s: int, count: int, rng_seed: int) -> list:
    """Deterministic sample of normal-cone members at ``xbar``.

    Alternates between the nonpositive and sparsity branches whenever both
    are nontrivial, and occasionally emits the zero vector.  Every output
    passes :func:`normal_cone_contains`.
    """
    xbar = _validate_in_set(xbar, s, "xbar")
    m = xbar.size
    s = int(s)
    rng = np.random.default_rng(rng_seed)
    free = np.setdiff1d(np.arange(m), support_indices(xbar))
    sparse_cap = min(m - s, free.size)
    out = []
    for i in range(int(count)):
        if free.size == 0 or rng.random() < 1.0 / 16.0:
            out.append(np.zeros(m))
            continue
        use_sparse = sparse_cap > 0 and (i % 2 == 1)
        y = np.zeros(m)
        if use_sparse:
            k = int(rng.integers(1, sparse_cap + 1))
            idx = rng.choice(free, size=k, replace=False)
            y[idx] = rng.standard_normal(k)
        else:
            k = int(rng.integers(1, free.size + 1))
            idx = rng.choice(free, size=k, replace=False)
            y[idx] = -np.abs(rng.standard_normal(k))
        out.append(y)
    return out
