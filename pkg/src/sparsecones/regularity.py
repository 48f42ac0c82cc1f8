"""Strong-regularity certifiers and prox-regularity probes.

Strong regularity of a pair of sets at a common point means the only
direction normal to the first set whose negative is normal to the second is
zero; it is the transversality condition behind local linear convergence of
projection methods.  The vector certifier decides the condition exactly by a
feasibility LP (nonpositive branch) plus support enumeration (sparsity
branch).  The matrix certifier is exact when the annihilating subspace is
trivial and otherwise falls back to a seeded falsification search, returning
``undecided`` rather than claiming regularity from a failed search.  The
distance-matrix certifier is fully linear and decided exactly by a rank
computation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np

from .config import MEMBERSHIP_TOL, zero_cutoff, zero_tol
from .errors import PreconditionError
from . import edm as _edm
from . import matrix_sets, vector_sets
from .linalg import (
    Subspace,
    check_symmetric,
    eig_sym,
    lp_cone_point,
    null_intersection_basis,
    symmetrize,
)

MAX_ENUM_DIM = 20
FALSIFICATION_STARTS = 10_000
FALSIFICATION_STEPS = 200


@dataclass(frozen=True)
class RegularityCertificate:
    """Outcome of a strong-regularity check.

    A ``not_regular`` verdict carries a unit-norm witness ``y`` with ``y``
    normal to the first set and ``-y`` normal to the second at the point.
    ``undecided`` is returned when the exact paths are out of reach and the
    falsification search found nothing; it never claims regularity.
    """

    verdict: str  # "regular" | "not_regular" | "undecided"
    witness: Optional[np.ndarray]
    method: str  # "exact-combinatorial" | "exact-linear" | "lp" | "falsification-search"
    details: str
    seed: Optional[int] = None
    diagnostics: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "method": self.method,
            "details": self.details,
            "seed": self.seed,
            "witness": None if self.witness is None else np.asarray(self.witness).tolist(),
            "diagnostics": self.diagnostics,
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)


def _validate_vec_point(xbar, s: int) -> np.ndarray:
    xbar = np.asarray(getattr(xbar, "x", xbar), dtype=float)
    if np.min(xbar, initial=0.0) < -zero_cutoff(xbar):
        raise PreconditionError("xbar has negative entries")
    if vector_sets.sparsity(xbar) > s:
        raise PreconditionError(f"xbar has more than s={s} nonzero entries")
    return xbar


def certify_affine_sparse(
    a, xbar, s: int,
    max_enum_dim: int = MAX_ENUM_DIM,
    rng_seed: int = 0,
    n_starts: int = FALSIFICATION_STARTS,
) -> RegularityCertificate:
    """Strong regularity of {affine solution set of ``A x = b``, nonnegative
    ``s``-sparse vectors} at ``xbar``.

    The normals to the affine set form the row space of ``A``.  Regularity
    fails exactly when that subspace contains a nonzero vector that is
    complementary to ``xbar`` and is either nonnegative (decided by a
    feasibility LP) or supported on at most ``m - s`` coordinates (decided by
    enumerating coordinate sets, exact up to ``max_enum_dim``; above that a
    sampling falsification runs and the verdict may be ``undecided``).
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    m = a.shape[1]
    s = int(s)
    if not 0 <= s <= m:
        raise ValueError(f"s={s} out of range [0, {m}]")
    xbar = _validate_vec_point(xbar, s)
    if xbar.size != m:
        raise ValueError("xbar length does not match the number of columns of A")
    v = Subspace.span(a)
    diag = {"normal_space_dim": v.dim, "m": m, "s": s}
    if v.dim == 0:
        return RegularityCertificate(
            "regular", None, "exact-combinatorial",
            "the affine normal space is trivial", diagnostics=diag,
        )
    support = set(int(j) for j in vector_sets.support_indices(xbar))
    # nonpositive branch: nonzero y >= 0 in the row space vanishing on the
    # support of xbar
    point = lp_cone_point(v, zero_coords=support)
    if point is not None:
        witness = point / float(np.linalg.norm(point))
        _check_vec_witness(v, xbar, s, witness)
        return RegularityCertificate(
            "not_regular", witness, "lp",
            "the affine normal space contains a nonnegative direction "
            "complementary to xbar", diagnostics=diag,
        )
    # sparsity branch: nonzero row-space vector supported on m - s
    # coordinates away from the support
    need = m - s
    free = sorted(set(range(m)) - support)
    if need == 0:
        return RegularityCertificate(
            "regular", None, "exact-combinatorial",
            "both branches exhausted: LP infeasible and the sparsity branch "
            "is trivial for s = m", diagnostics=diag,
        )
    if m <= max_enum_dim:
        checked = 0
        for coords in combinations(free, need):
            checked += 1
            basis = null_intersection_basis(v, coords)
            if basis.shape[0] > 0:
                witness = basis[0] / float(np.linalg.norm(basis[0]))
                _check_vec_witness(v, xbar, s, witness)
                diag["enumerated_sets"] = checked
                return RegularityCertificate(
                    "not_regular", witness, "exact-combinatorial",
                    f"the affine normal space meets the coordinate subspace "
                    f"of {sorted(coords)}", diagnostics=diag,
                )
        diag["enumerated_sets"] = checked
        return RegularityCertificate(
            "regular", None, "exact-combinatorial",
            f"both branches exhausted over {checked} coordinate sets",
            diagnostics=diag,
        )
    # falsification only: sample complementary row-space directions and
    # hard-threshold them toward the sparsity branch
    rng = np.random.default_rng(rng_seed)
    comp_basis = null_intersection_basis(v, free)
    k = comp_basis.shape[0]
    if k > 0:
        for _ in range(int(n_starts)):
            y = rng.standard_normal(k) @ comp_basis
            yt = vector_sets.project_sparse(y, need).canonical
            if (
                np.linalg.norm(yt) > 1e-8
                and np.linalg.norm(yt - v.project(yt)) <= 1e-10 * (1 + np.linalg.norm(yt))
            ):
                witness = yt / float(np.linalg.norm(yt))
                _check_vec_witness(v, xbar, s, witness)
                return RegularityCertificate(
                    "not_regular", witness, "falsification-search",
                    "sampled sparse direction in the affine normal space",
                    seed=rng_seed, diagnostics=diag,
                )
    return RegularityCertificate(
        "undecided", None, "falsification-search",
        f"m = {m} exceeds the exact enumeration cap {max_enum_dim} and the "
        "falsification search found no witness", seed=rng_seed, diagnostics=diag,
    )


def _check_vec_witness(v: Subspace, xbar, s: int, y: np.ndarray) -> None:
    if np.linalg.norm(y) < 1e-6:
        raise AssertionError("witness too small")
    if np.linalg.norm(y - v.project(y)) > 1e-8 * (1.0 + np.linalg.norm(y)):
        raise AssertionError("witness left the affine normal space")
    if not vector_sets.normal_cone_contains(xbar, -y, s).is_member:
        raise AssertionError("witness fails the sparse-set normal-cone test")


def certify_span_low_rank_psd(
    mats, xbar, s: int,
    rng_seed: int = 0,
    n_starts: int = FALSIFICATION_STARTS,
    n_steps: int = FALSIFICATION_STEPS,
) -> RegularityCertificate:
    """Strong regularity of {affine set with normals spanned by the given
    symmetric matrices, PSD rank-at-most-``s`` matrices} at ``Xbar``.

    Phase 1 (exact): the subspace of span elements annihilated by ``Xbar`` is
    computed; if trivial, the pair is regular.  Phase 2 (falsification):
    seeded random starts alternate between that subspace and the PSD cone
    (or the rank-at-most-``m - s`` set) looking for a nonzero witness; if the
    search fails the verdict is ``undecided``.
    """
    mats = [check_symmetric(a_j, f"A_{j}") for j, a_j in enumerate(mats)]
    if not mats:
        raise ValueError("need at least one spanning matrix")
    m = mats[0].shape[0]
    for a_j in mats:
        if a_j.shape[0] != m:
            raise ValueError("spanning matrices must share the dimension of Xbar")
    xbar, _ = matrix_sets.validate_psd_low_rank(xbar, s, "Xbar")
    if xbar.shape[0] != m:
        raise ValueError("Xbar dimension mismatch")
    s = int(s)
    # orthonormal basis of the span, then the annihilated subspace
    span = Subspace.span([a_j.ravel() for a_j in mats])
    d = span.dim
    diag = {"span_dim": d, "m": m, "s": s}
    if d == 0:
        return RegularityCertificate(
            "regular", None, "exact-linear", "the span is trivial",
            diagnostics=diag,
        )
    stacked = np.stack([(xbar @ b.reshape(m, m)).ravel() for b in span.basis], axis=1)
    _, sv, vt = np.linalg.svd(stacked, full_matrices=True)
    cutoff = zero_tol() * max(1.0, float(sv[0]) if sv.size else 0.0)
    rank = int(np.sum(sv > cutoff))
    null = vt[rank:]
    diag["annihilator_dim"] = int(null.shape[0])
    if null.shape[0] == 0:
        return RegularityCertificate(
            "regular", None, "exact-linear",
            "no nonzero span element annihilates Xbar", diagnostics=diag,
        )
    kernel = [
        symmetrize((c @ span.basis).reshape(m, m)) for c in null
    ]  # basis of {Y in span : Xbar Y = 0}
    witness, how = _falsify_matrix_branch(
        kernel, m, s, rng_seed, n_starts, n_steps
    )
    if witness is not None:
        if not matrix_sets.normal_cone_contains(xbar, -witness, s).is_member:
            raise AssertionError("matrix witness fails the normal-cone test")
        return RegularityCertificate(
            "not_regular", witness, "falsification-search",
            f"witness found by {how}", seed=rng_seed, diagnostics=diag,
        )
    diag["starts"] = n_starts
    diag["steps"] = n_steps
    return RegularityCertificate(
        "undecided", None, "falsification-search",
        "a nonzero annihilating span element exists but the search found "
        "neither a PSD nor a low-rank one", seed=rng_seed, diagnostics=diag,
    )


def _project_span(kernel, y):
    out = np.zeros_like(y)
    for b in kernel:
        out += float(np.sum(b * y)) * b
    return out


def _falsify_matrix_branch(kernel, m, s, rng_seed, n_starts, n_steps):
    """Search the annihilating subspace for a nonzero PSD element or one of
    rank at most m - s.  Returns (witness, description) or (None, None)."""
    rng = np.random.default_rng(rng_seed)
    k = len(kernel)
    tol = MEMBERSHIP_TOL
    rank_cap = m - s
    # quick wins: basis elements and their negatives
    candidates = [b for b in kernel] + [-b for b in kernel]
    for y in candidates:
        y = y / float(np.linalg.norm(y))
        lam = eig_sym(y).lam
        if lam[-1] >= -tol:
            return y, "a PSD kernel basis element"
        if rank_cap > 0 and int(np.sum(np.abs(lam) > zero_tol() * max(1.0, abs(lam).max()))) <= rank_cap:
            return y, "a low-rank kernel basis element"
    for start in range(int(n_starts)):
        c = rng.standard_normal(k)
        y = sum(ci * bi for ci, bi in zip(c, kernel))
        norm = float(np.linalg.norm(y))
        if norm < 1e-12:
            continue
        y = y / norm
        use_psd = start % 2 == 0 or rank_cap == 0
        for _ in range(int(n_steps)):
            if use_psd:
                z = matrix_sets.project_psd(y)
            else:
                z = matrix_sets.project_low_rank(y, rank_cap) if rank_cap > 0 else None
            if z is None:
                break
            gap = float(np.linalg.norm(z - y))
            y_new = _project_span(kernel, z)
            norm = float(np.linalg.norm(y_new))
            if norm < 1e-12:
                break
            y_new = y_new / norm
            if gap <= 1e-11:
                lam = eig_sym(y).lam
                if use_psd and lam[-1] >= -tol:
                    return y, f"alternating PSD search (start {start})"
                if not use_psd and rank_cap > 0:
                    r = int(np.sum(np.abs(lam) > zero_tol() * max(1.0, abs(lam).max())))
                    if r <= rank_cap:
                        return y, f"alternating low-rank search (start {start})"
                break
            if float(np.linalg.norm(y_new - y)) < 1e-14:
                break
            y = y_new
    return None, None


@dataclass(frozen=True)
class ProxRegularityEvidence:
    """Result of a prox-regularity probe with constructive evidence.

    At maximal sparsity/rank: a ball radius within which all sampled points
    projected to singletons.  Below it: member counts of the projection along
    the explicit spoiling sequence (all at least 2).
    """

    prox_regular: bool
    rank_or_sparsity: int
    delta: Optional[float] = None
    n_samples: int = 0
    all_singleton: Optional[bool] = None
    sequence_ks: tuple = ()
    member_counts: tuple = ()


def prox_regularity_vector(
    xbar, s: int, n_samples: int = 100, ks=(10, 100, 1000), rng_seed: int = 0
) -> ProxRegularityEvidence:
    """Prox-regularity of the nonnegative ``s``-sparse set at ``xbar``:
    holds exactly at maximal sparsity.

    Evidence: at maximal sparsity, all sampled points in the ball of radius
    half the smallest positive entry have single-valued projections; below
    it, points of the spoiling sequence have at least two projection members.
    """
    xbar = np.asarray(getattr(xbar, "x", xbar), dtype=float)
    m = xbar.size
    s = int(s)
    if m < 2 or not 1 <= s <= m - 1:
        raise ValueError(f"s={s} out of range [1, {m - 1}] (need m >= 2)")
    xbar = _validate_vec_point(xbar, s)
    k0 = vector_sets.sparsity(xbar)
    if k0 == s:
        positive = xbar[np.abs(xbar) > zero_cutoff(xbar)]
        delta = 0.5 * float(np.min(positive))
        rng = np.random.default_rng(rng_seed)
        all_single = True
        for _ in range(int(n_samples)):
            u = rng.standard_normal(m)
            u *= rng.random() * delta / float(np.linalg.norm(u))
            res = vector_sets.project_sparse_nonneg(xbar + u, s)
            if res.member_count != 1:
                all_single = False
        return ProxRegularityEvidence(
            True, k0, delta=delta, n_samples=int(n_samples), all_singleton=all_single
        )
    zeros = np.setdiff1d(np.arange(m), vector_sets.support_indices(xbar))
    pick = zeros[: s - k0 + 1]  # at least two coordinates
    v = np.zeros(m)
    v[pick] = 1.0
    counts = []
    for k in ks:
        res = vector_sets.project_sparse_nonneg(xbar + v / float(k), s)
        counts.append(res.member_count)
    return ProxRegularityEvidence(
        False, k0, sequence_ks=tuple(int(k) for k in ks),
        member_counts=tuple(counts),
    )


def prox_regularity_matrix(
    xbar, s: int, n_samples: int = 100, ks=(10, 100, 1000), rng_seed: int = 0
) -> ProxRegularityEvidence:
    """Prox-regularity of the PSD rank-at-most-``s`` set at ``Xbar``: holds
    exactly at maximal rank.  Evidence is produced by the vector probe on the
    eigenvalue vector (the diagonal case of the constraint)."""
    xbar, dec = matrix_sets.validate_psd_low_rank(xbar, s, "Xbar")
    m = xbar.shape[0]
    s = int(s)
    if m < 2 or not 1 <= s <= m - 1:
        raise ValueError(f"s={s} out of range [1, {m - 1}] (need m >= 2)")
    lam = np.maximum(dec.lam, 0.0)
    cutoff = zero_tol() * max(1.0, float(lam.max()) if lam.size else 0.0)
    lam[lam <= cutoff] = 0.0
    ev = prox_regularity_vector(lam, s, n_samples=n_samples, ks=ks, rng_seed=rng_seed)
    rank = int(np.sum(lam > 0.0))
    return ProxRegularityEvidence(
        prox_regular=(rank == s),
        rank_or_sparsity=rank,
        delta=ev.delta,
        n_samples=ev.n_samples,
        all_singleton=ev.all_singleton,
        sequence_ks=ev.sequence_ks,
        member_counts=ev.member_counts,
    )


def _completion_constraint_matrix(inst: "_edm.PartialEdm", block_x: np.ndarray):
    """Linear system whose null space parametrizes the strong-regularity
    violations of a completion instance.

    Unknowns: the known upper-triangle entries of a symmetric matrix Y (zero
    elsewhere).  Constraints: the transform of Y must vanish on its border
    row/column, and the transformed block must be annihilated by the block of
    the solution.
    """
    n = inst.n_points
    mb = n - 1
    g = _edm.householder_map(n)
    unknowns = [(i, j) for i in range(n) for j in range(i, n) if inst.known[i, j]]
    cols = []
    for (i, j) in unknowns:
        basis = np.zeros((n, n))
        basis[i, j] = 1.0
        basis[j, i] = 1.0
        ty = g.apply(basis)
        border = ty[-1, :]  # last row = last column by symmetry
        prod = block_x @ ty[:mb, :mb]
        cols.append(np.concatenate([border, prod.ravel()]))
    return np.stack(cols, axis=1), unknowns


def certify_edm_completion(inst: "_edm.PartialEdm", xbar) -> RegularityCertificate:
    """Strong regularity of the completion pair {data constraint, geometry
    constraint} at a solution ``Xbar``.

    All three defining conditions are linear in the unknown direction, so the
    certificate is exact: the pair is regular iff the assembled constraint
    matrix has trivial null space.  Preconditions (``Xbar`` solves the
    instance, is hollow with strictly positive off-diagonal entries, and its
    transformed block has rank exactly ``s``) raise
    :class:`PreconditionError` naming the failure.
    """
    xbar = check_symmetric(xbar, "Xbar")
    block_x = _edm.validate_completion_point(inst, xbar)
    l_mat, unknowns = _completion_constraint_matrix(inst, block_x)
    _, sv, vt = np.linalg.svd(l_mat, full_matrices=True)
    cutoff = zero_tol() * max(1.0, float(sv[0]) if sv.size else 0.0)
    rank = int(np.sum(sv > cutoff))
    null_dim = len(unknowns) - rank
    diag = {
        "n_unknowns": len(unknowns),
        "n_constraints": int(l_mat.shape[0]),
        "rank": rank,
        "null_dim": int(null_dim),
    }
    if null_dim == 0:
        return RegularityCertificate(
            "regular", None, "exact-linear",
            "the violation system has trivial null space", diagnostics=diag,
        )
    coeffs = vt[-1]
    n = inst.n_points
    witness = np.zeros((n, n))
    for (i, j), c in zip(unknowns, coeffs):
        witness[i, j] = c
        witness[j, i] = c
    witness = witness / float(np.linalg.norm(witness))
    if not _edm.normal_cone_data_contains(inst, xbar, witness):
        raise AssertionError("completion witness fails the data normal-cone test")
    if not _edm.normal_cone_embedding_contains(inst, xbar, -witness):
        raise AssertionError(
            "completion witness fails the geometry normal-cone test"
        )
    return RegularityCertificate(
        "not_regular", witness, "exact-linear",
        f"the violation system has a {null_dim}-dimensional null space",
        diagnostics=diag,
    )
