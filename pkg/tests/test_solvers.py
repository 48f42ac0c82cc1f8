import numpy as np
import pytest

from sparsecones import edm, solvers, vector_sets
from sparsecones.solvers import (
    AffineSet,
    EmbeddingRankSet,
    FixedEntriesNonnegSet,
    NonnegSparseSet,
    PsdLowRankSet,
    RateEstimate,
    SolveConfig,
    SolveTrace,
    dr_step,
    estimate_rate,
    reflect,
    solve_dr,
    solve_map,
)

from conftest import random_symmetric


def make_trace(residuals, steps=None):
    residuals = np.asarray(residuals, dtype=float)
    if steps is None:
        steps = residuals
    return SolveTrace(
        method="dr",
        residuals=residuals,
        step_norms=np.asarray(steps, dtype=float),
        times_ms=np.zeros(residuals.size),
        status="converged",
    )


class TestReflect:
    def test_orthant_reflection(self):
        class Orthant:
            kind = "nonneg"

            def project(self, x):
                return np.maximum(np.asarray(x, float), 0.0)

        assert np.allclose(reflect(Orthant(), np.array([-1.0, 2.0])), [1.0, 2.0])

    def test_fixed_point(self):
        c = AffineSet([[1.0, 1.0]], [1.0])
        x = np.array([0.5, 0.5])
        assert np.allclose(reflect(c, x), x)

    def test_affine_mirror(self):
        c = AffineSet([[0.0, 1.0]], [0.0])  # the line y = 0
        assert np.allclose(reflect(c, np.array([3.0, 4.0])), [3.0, -4.0])

    def test_involution_for_affine(self, rng):
        c = AffineSet(rng.standard_normal((2, 5)), rng.standard_normal(2))
        x = rng.standard_normal(5)
        assert np.allclose(reflect(c, reflect(c, x)), x, atol=1e-9)


class TestDrStep:
    def test_identity_on_full_space(self, rng):
        c = AffineSet(np.zeros((1, 3)), [0.0])  # the whole space
        x = rng.standard_normal(3)
        assert np.allclose(dr_step(c, c, x), x, atol=1e-12)

    def test_perpendicular_lines_one_step(self):
        c1 = AffineSet([[0.0, 1.0]], [0.0])
        c2 = AffineSet([[1.0, 0.0]], [0.0])
        assert np.allclose(dr_step(c1, c2, np.array([3.0, 4.0])), 0.0, atol=1e-12)

    def test_feasible_fixed_point(self, rng):
        a = rng.standard_normal((2, 5))
        x_true = rng.standard_normal(5)
        c1 = AffineSet(a, a @ x_true)
        c2 = AffineSet(a[:1], a[:1] @ x_true)
        assert np.allclose(dr_step(c1, c2, x_true), x_true, atol=1e-10)

    def test_fixed_point_maps_to_feasibility(self, rng):
        # near-fixed points of the operator have nearly feasible shadows
        c1 = AffineSet([[1.0, 1.0]], [1.0])
        c2 = NonnegSparseSet(1)
        x, tr = solve_dr(c1, c2, rng.standard_normal(2), SolveConfig(tol=1e-13, maxiter=5000))
        if tr.status == "converged":
            step = dr_step(c1, c2, x)  # shadow is near a fixed point cluster
            p = c1.project(x)
            assert np.linalg.norm(p - c2.project(p)) <= 1e-6


class TestSolveDr:
    def test_convex_halfspaces(self, rng):
        c1 = AffineSet([[1.0, 0.0]], [0.3])
        c2 = AffineSet([[0.0, 1.0]], [-0.2])
        x, tr = solve_dr(c1, c2, rng.standard_normal(2))
        assert tr.status == "converged"
        assert np.allclose(x, [0.3, -0.2], atol=1e-6)
        assert tr.residuals[-1] <= 1e-8

    def test_planted_sparse_recovery(self):
        a, b, x_true = solvers.plant_sparse_instance(5, 2, 4, rng_seed=3)
        rng = np.random.default_rng(4)
        x0 = x_true + 0.02 * rng.standard_normal(5)
        shadow, tr = solve_dr(
            AffineSet(a, b), NonnegSparseSet(2), x0, SolveConfig(tol=1e-10)
        )
        assert tr.status == "converged"
        q = NonnegSparseSet(2).project(shadow)
        assert np.linalg.norm(a @ q - b) <= 1e-8
        assert vector_sets.sparsity(q) <= 2
        assert np.min(q) >= 0.0

    def test_disjoint_never_converges(self):
        c1 = AffineSet([[0.0, 1.0]], [0.0])
        c2 = AffineSet([[0.0, 1.0]], [1.0])
        _, tr = solve_dr(c1, c2, np.array([0.1, 0.9]), SolveConfig(maxiter=3000))
        assert tr.status in ("maxiter", "stalled")

    def test_monotone_toward_fixed_point_convex(self, rng):
        # firmly nonexpansive steps never move away from a fixed point
        c1 = AffineSet([[1.0, 2.0, 0.0]], [1.0])
        c2 = AffineSet([[0.0, 1.0, 1.0]], [0.5])
        xfix, tr = solve_dr(c1, c2, rng.standard_normal(3), SolveConfig(tol=1e-12))
        assert tr.status == "converged"
        # recover the actual fixed point by iterating once more
        x = rng.standard_normal(3)
        xstar = x
        for _ in range(2000):
            xstar = dr_step(c1, c2, xstar)
        dist = np.linalg.norm(x - xstar)
        for _ in range(50):
            x = dr_step(c1, c2, x)
            d = np.linalg.norm(x - xstar)
            assert d <= dist + 1e-10
            dist = d

    def test_deterministic_traces(self, rng):
        a, b, _ = solvers.plant_sparse_instance(6, 2, 5, rng_seed=8)
        x0 = rng.standard_normal(6)
        s1, t1 = solve_dr(AffineSet(a, b), NonnegSparseSet(2), x0)
        s2, t2 = solve_dr(AffineSet(a, b), NonnegSparseSet(2), x0.copy())
        assert np.array_equal(s1, s2)
        assert np.array_equal(t1.residuals, t2.residuals)
        assert np.array_equal(t1.step_norms, t2.step_norms)

    def test_converged_invariant(self, rng):
        c1 = AffineSet([[1.0, 0.0]], [0.0])
        c2 = AffineSet([[0.0, 1.0]], [0.0])
        _, tr = solve_dr(c1, c2, rng.standard_normal(2), SolveConfig(tol=1e-9))
        assert tr.status == "converged"
        assert tr.residuals[-1] <= 1e-9
        assert np.all(tr.residuals >= 0.0)

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            SolveConfig(tol=0.0)
        with pytest.raises(ValueError):
            SolveConfig(maxiter=0)
        with pytest.raises(ValueError):
            SolveConfig(stall_window=0)


class TestSolveMap:
    def test_two_lines(self, rng):
        c1 = AffineSet([[1.0, -1.0]], [0.0])
        c2 = AffineSet([[1.0, 1.0]], [2.0])
        x, tr = solve_map(c1, c2, rng.standard_normal(2))
        assert tr.status == "converged"
        assert np.allclose(x, [1.0, 1.0], atol=1e-6)

    def test_feasible_start_immediate(self):
        c1 = AffineSet([[1.0, 0.0]], [1.0])
        c2 = AffineSet([[0.0, 1.0]], [2.0])
        x0 = np.array([1.0, 2.0])
        x, tr = solve_map(c1, c2, x0)
        assert tr.status == "converged"
        assert tr.iterations == 1
        assert np.allclose(x, x0)

    def test_planted_instance(self):
        a, b, x_true = solvers.plant_sparse_instance(6, 2, 5, rng_seed=21)
        rng = np.random.default_rng(22)
        x0 = x_true + 0.02 * rng.standard_normal(6)
        shadow, tr = solve_map(
            AffineSet(a, b), NonnegSparseSet(2), x0, SolveConfig(tol=1e-10)
        )
        assert tr.status == "converged"
        q = NonnegSparseSet(2).project(shadow)
        assert np.linalg.norm(a @ q - b) <= 1e-8


class TestEstimateRate:
    def test_exact_geometric(self):
        tr = make_trace(0.5 ** np.arange(40))
        est = estimate_rate(tr)
        assert np.isclose(est.rho, 0.5, atol=1e-12)
        assert np.isclose(est.r2, 1.0)

    def test_constant_residuals(self):
        tr = make_trace(np.full(40, 0.3))
        est = estimate_rate(tr)
        assert est.rho == 1.0

    def test_noisy_geometric(self):
        rng = np.random.default_rng(5)
        n = np.arange(60)
        vals = 0.7**n * rng.uniform(0.9, 1.1, size=60)
        est = estimate_rate(make_trace(vals))
        assert 0.65 <= est.rho <= 0.75

    def test_insufficient_data(self):
        with pytest.raises(ValueError, match="insufficient"):
            estimate_rate(make_trace([0.5, 0.25]))
        with pytest.raises(ValueError, match="insufficient"):
            estimate_rate(make_trace(np.full(30, 2.0)))  # nothing below 1

    def test_rho_capped_at_one(self):
        tr = make_trace(0.9 ** -np.arange(-30, 10))  # growing tail
        est = estimate_rate(tr)
        assert est.rho <= 1.0


class TestConstraintSets:
    def test_projection_idempotence(self, rng):
        inst, _ = edm.generate_instance(5, 2, 0.6, 31)
        sets = [
            AffineSet(rng.standard_normal((2, 6)), rng.standard_normal(2)),
            NonnegSparseSet(2),
            PsdLowRankSet(2),
            FixedEntriesNonnegSet.from_partial_edm(inst),
            EmbeddingRankSet.from_partial_edm(inst),
        ]
        points = [
            rng.standard_normal(6),
            rng.standard_normal(8),
            random_symmetric(rng, 4),
            random_symmetric(rng, 5),
            random_symmetric(rng, 5),
        ]
        for c, x in zip(sets, points):
            p = c.project(x)
            assert np.linalg.norm(c.project(p) - p) <= 1e-9 * (1 + np.linalg.norm(p))

    def test_affine_projection_solves(self, rng):
        a = rng.standard_normal((3, 7))
        b = rng.standard_normal(3)
        c = AffineSet(a, b)
        p = c.project(rng.standard_normal(7))
        assert np.linalg.norm(a @ p - b) <= 1e-9

    def test_sampled_optimality(self, rng):
        c = NonnegSparseSet(2)
        x = rng.standard_normal(6)
        p = c.project(x)
        d = np.linalg.norm(x - p)
        for _ in range(500):
            z = np.zeros(6)
            idx = rng.choice(6, size=2, replace=False)
            z[idx] = np.abs(rng.standard_normal(2))
            assert d <= np.linalg.norm(x - z) + 1e-9

    def test_tie_flags(self):
        assert NonnegSparseSet(1).tie_flag(np.array([1.0, 1.0]))
        assert not NonnegSparseSet(1).tie_flag(np.array([2.0, 1.0]))
        assert PsdLowRankSet(1).tie_flag(np.diag([2.0, 2.0, 0.0]))

    def test_tie_tracking(self):
        c1 = AffineSet([[1.0, 1.0]], [2.0])
        c2 = NonnegSparseSet(1)
        # symmetric start keeps hitting the tie
        _, tr = solve_dr(c1, c2, np.array([1.0, 1.0]), SolveConfig(maxiter=5, track_ties=True))
        assert tr.boundary_ties is not None and tr.boundary_ties >= 1

    def test_complete_edm_output_contract(self):
        inst, pts = edm.generate_instance(6, 2, 0.7, 33)
        completed, tr = solvers.complete_edm(inst)
        if tr.status == "converged":
            assert np.allclose(
                completed[inst.known], inst.entries[inst.known], atol=1e-8
            )
            chk = edm.is_edm(completed)
            assert chk.is_edm and chk.embed_dim <= inst.s


class TestTraceExport:
    def test_csv_round_trip(self, tmp_path, rng):
        c1 = AffineSet([[1.0, 0.0]], [0.0])
        c2 = AffineSet([[0.0, 1.0]], [0.0])
        _, tr = solve_dr(c1, c2, rng.standard_normal(2))
        path = tmp_path / "trace.csv"
        tr.to_csv(path)
        import csv

        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == tr.iterations
        assert float(rows[-1]["residual"]) == tr.residuals[-1]
        assert rows[0].keys() == {"iteration", "residual", "step_norm", "time_ms"}

    def test_summary(self, rng):
        c1 = AffineSet([[1.0, 0.0]], [0.0])
        c2 = AffineSet([[0.0, 1.0]], [0.0])
        _, tr = solve_dr(c1, c2, rng.standard_normal(2))
        s = tr.summary()
        assert s["status"] == "converged"
        assert s["iterations"] == tr.iterations
