"""
Tests for the two-phase tableau simplex

"""
import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from lpreach.core.config import SolverConfig
from lpreach.core.errors import DimensionMismatch, PivotTooSmall
from lpreach.models.schemas import SolverStatus
from lpreach.services.bench import gen_random_lp
from lpreach.services.lp_core import CanonicalLP, GeneralLP, RecoveryMap, canonicalize
from lpreach.services.simplex import (
    BasisSet,
    Tableau,
    linprog,
    mark_aux_rows,
    phase_one,
    phase_two,
    pivot,
    ratio_test,
    select_entering,
    solve_batch,
)

EPS = SolverConfig().eps_opt


def _tableau(constraints, objective, n_c, phase=2):
    """Tableau from constraint rows and the objective row; aux row left at zero"""
    rows = np.vstack([np.atleast_2d(constraints), objective, np.zeros(len(objective))])
    m = rows.shape[0] - 2
    return Tableau(rows.astype(float), n_c, m, phase=phase)


def _replay_bases(outcome):
    """Basis sets visited during a solve, rebuilt from the pivot log"""
    t = outcome.tableau
    basis = list(range(t.n_c, t.n_c + t.m))
    seen = [tuple(basis)]
    for record in outcome.pivots:
        assert basis[record.row] == record.leaving
        basis[record.row] = record.entering
        seen.append(tuple(basis))
    return seen


class TestSelectEntering:
    def test_bland_not_steepest(self):
        t = _tableau([[1.0, 1.0, 1.0, 1.0, 1.0]], [-1.0, -3.0, 0.0, 0.0, 0.0], n_c=3)
        assert select_entering(t) == 0

    def test_optimal(self):
        t = _tableau([[1.0, 1.0, 1.0, 1.0, 1.0]], [0.0, 0.0, 0.0, 0.0, 0.0], n_c=3)
        assert select_entering(t) is None

    def test_tolerance_screens_near_zero(self):
        t = _tableau([[1.0, 1.0, 1.0, 1.0]], [EPS / 2, -2 * EPS, 0.0, 0.0], n_c=2)
        assert select_entering(t) == 1

    def test_phase_one_scans_aux_row(self):
        t = _tableau([[1.0, 1.0, 1.0]], [-5.0, 0.0, 0.0], n_c=1, phase=1)
        t.entries[t.m + 1] = [0.0, -1.0, 0.0]
        assert select_entering(t) == 1


class TestRatioTest:
    def test_smallest_ratio(self):
        t = _tableau([[2.0, 1.0, 0.0, 4.0], [1.0, 0.0, 1.0, 3.0]], [-1.0, 0.0, 0.0, 0.0], n_c=1, phase=1)
        assert ratio_test(t, 0, BasisSet([1, 2])) == 0

    def test_unbounded_column(self):
        t = _tableau([[-1.0, 1.0, 0.0, 4.0], [0.0, 0.0, 1.0, 3.0]], [-1.0, 0.0, 0.0, 0.0], n_c=1, phase=1)
        assert ratio_test(t, 0, BasisSet([1, 2])) is None

    def test_zero_ratio_allowed(self):
        t = _tableau([[1.0, 1.0, 0.0, 0.0], [1.0, 0.0, 1.0, 5.0]], [-1.0, 0.0, 0.0, 0.0], n_c=1, phase=1)
        assert ratio_test(t, 0, BasisSet([1, 2])) == 0

    def test_tie_broken_by_basic_index(self):
        t = _tableau([[1.0, 1.0, 0.0, 2.0], [1.0, 0.0, 1.0, 2.0]], [-1.0, 0.0, 0.0, 0.0], n_c=1, phase=1)
        assert ratio_test(t, 0, BasisSet([2, 1])) == 1


class TestPivot:
    def test_scaling_only(self):
        t = Tableau(np.array([[2.0, 1.0, 4.0], [0.0, 0.0, 0.0], [-2.0, 0.0, -4.0]]), 1, 1, phase=1)
        new_t, basis = pivot(t, BasisSet([1]), 0, 0)
        assert_allclose(new_t.entries[0, [0, 2]], [1.0, 2.0])
        assert basis.as_tuple() == (0,)
        # inputs are not modified
        assert t.entries[0, 0] == 2.0

    def test_unit_column_is_bookkeeping_only(self):
        entries = np.array([
            [1.0, 3.0, 1.0, 0.0, 5.0],
            [0.0, 2.0, 0.0, 1.0, 4.0],
            [0.0, 1.0, 0.0, 0.0, 0.0],
            [0.0, -5.0, 0.0, 0.0, -9.0],
        ])
        t = Tableau(entries.copy(), 2, 2, phase=1)
        new_t, basis = pivot(t, BasisSet([2, 3]), 0, 0)
        assert_array_equal(new_t.entries, entries)
        assert basis.as_tuple() == (0, 3)

    def test_matches_dense_row_reduction(self, rng):
        entries = rng.uniform(0.5, 2.0, (4, 5))
        t = Tableau(entries.copy(), 2, 2, phase=1)
        new_t, _ = pivot(t, BasisSet([2, 3]), 1, 1)

        expected = entries.copy()
        expected[1] /= entries[1, 1]
        for r in (0, 2, 3):
            expected[r] -= entries[r, 1] * expected[1]
        assert_allclose(new_t.entries, expected, rtol=1e-12, atol=1e-12)

    def test_tiny_pivot_rejected(self):
        t = _tableau([[1e-12, 1.0, 1.0]], [-1.0, 0.0, 0.0], n_c=1, phase=1)
        with pytest.raises(PivotTooSmall):
            pivot(t, BasisSet([1]), 0, 0)


class TestPhases:
    def test_phase_one_single_pivot(self):
        p = CanonicalLP(np.array([[1.0]]), np.array([1.0]), np.array([0.0]), RecoveryMap(1, 1, 0, False, np.ones(1)))
        t, basis, feasible = phase_one(p)
        assert feasible
        assert basis.as_tuple() == (0,)
        assert t.iterations == 1

    def test_phase_one_contradictory(self):
        canon = canonicalize(GeneralLP.create([0.0], A_eq=[[1.0], [1.0]], b_eq=[1.0, 2.0]))
        _, _, feasible = phase_one(canon)
        assert not feasible

    def test_phase_one_duplicate_leaves_rank_deficit(self):
        canon = canonicalize(GeneralLP.create([0.0], A_eq=[[1.0], [1.0]], b_eq=[1.0, 1.0]))
        t, basis, feasible = phase_one(canon)
        assert feasible
        lingering = basis.auxiliary_rows(canon.n_c)
        assert len(lingering) == canon.m - np.linalg.matrix_rank(canon.A)
        assert_allclose(t.rhs[lingering], 0.0, atol=1e-12)

    def test_mark_without_auxiliaries_is_identity(self):
        canon = canonicalize(GeneralLP.create([1.0, 1.0], A_ub=[[1.0, 1.0]], b_ub=[1.0]))
        t, basis, _ = phase_one(canon)
        assert len(basis.auxiliary_rows(canon.n_c)) == 0
        assert_array_equal(mark_aux_rows(t, basis).entries, t.entries)

    def test_mark_takes_absolute_value(self):
        entries = np.zeros((4, 5))
        entries[0] = [-1.0, 0.0, 1.0, 0.0, 0.0]
        entries[1] = [0.0, -2.0, 0.0, 1.0, 3.0]
        t = Tableau(entries, 2, 2, phase=1)
        marked = mark_aux_rows(t, BasisSet([2, 1]))
        assert_array_equal(marked.entries[0], [1.0, 0.0, 1.0, 0.0, 0.0])
        assert_array_equal(marked.entries[1], entries[1])

    def test_marked_auxiliary_ejected_at_zero_ratio(self):
        # x3 is pinned to x1 + x2 - 1 = 0; without marking phase two reports unbounded
        p = GeneralLP.create([0.0, 0.0, -1.0], A_eq=[[1.0, 1.0, 0.0], [1.0, 1.0, -1.0]], b_eq=[1.0, 1.0])
        canon = canonicalize(p)
        t, basis, feasible = phase_one(canon)
        assert feasible
        lingering = basis.auxiliary_rows(canon.n_c)
        assert len(lingering) == 1

        _, unmarked_basis, unmarked_bounded = phase_two(t, basis)
        assert not unmarked_bounded

        t2, basis2, bounded = phase_two(mark_aux_rows(t, basis), basis)
        assert bounded
        assert len(basis2.auxiliary_rows(canon.n_c)) == 0
        first = [r for r in t2.pivots if r.phase == 2][0]
        assert first.row == lingering[0]
        assert first.leaving >= canon.n_c
        assert first.ratio == 0.0

        outcome = linprog(p)
        assert outcome.status.success
        assert outcome.fun == pytest.approx(0.0, abs=1e-12)
        assert_allclose(outcome.x, [1.0, 0.0, 0.0], atol=1e-12)

    def test_phase_two_unbounded(self):
        canon = canonicalize(GeneralLP.create([-1.0]))
        t, basis, feasible = phase_one(canon)
        assert feasible
        _, _, bounded = phase_two(mark_aux_rows(t, basis), basis)
        assert not bounded

    def test_phase_two_shape_check(self):
        t = Tableau(np.zeros((3, 3)), 2, 2)
        with pytest.raises(DimensionMismatch):
            phase_two(t, BasisSet([0, 1]))

    def test_already_optimal_zero_pivots(self):
        outcome = linprog(GeneralLP.create([0.0, 1.0], A_eq=[[1.0, 0.0]], b_eq=[1.0]))
        assert outcome.status.success
        assert not [r for r in outcome.pivots if r.phase == 2]


class TestLinprog:
    def test_vertex(self):
        outcome = linprog(GeneralLP.create([-1.0, -2.0], A_ub=[[1.0, 1.0]], b_ub=[1.0]))
        assert outcome.status.label == SolverStatus.SUCCESS
        assert_allclose(outcome.x, [0.0, 1.0])
        assert outcome.fun == pytest.approx(-2.0)

    def test_duplicate_equalities(self):
        outcome = linprog(GeneralLP.create([1.0, 0.0], A_eq=[[1.0, 1.0], [1.0, 1.0]], b_eq=[1.0, 1.0]))
        assert outcome.status.success
        assert outcome.fun == pytest.approx(0.0, abs=1e-12)
        assert_allclose(outcome.x, [0.0, 1.0])

    def test_infeasible_zeroes_output(self):
        outcome = linprog(GeneralLP.create([1.0], A_ub=[[1.0]], b_ub=[-1.0]))
        assert not outcome.status.feasible
        assert outcome.status.label == SolverStatus.INFEASIBLE
        assert_array_equal(outcome.x, [0.0])
        assert outcome.fun == 0.0

    def test_unbounded_without_constraints(self):
        outcome = linprog(GeneralLP.create([-1.0]))
        assert outcome.status.feasible
        assert not outcome.status.bounded
        assert outcome.status.label == SolverStatus.UNBOUNDED

    def test_free_variables(self):
        # min x1 + x2, x1 >= -1, x2 >= -2 (free mode)
        p = GeneralLP.create([1.0, 1.0], A_ub=[[-1.0, 0.0], [0.0, -1.0]], b_ub=[1.0, 2.0], unbounded=True)
        outcome = linprog(p)
        assert outcome.status.success
        assert_allclose(outcome.x, [-1.0, -2.0])

    # textbook cases with known optima
    def test_linear_upper_bound(self):
        outcome = linprog(GeneralLP.create([-3.0, -2.0], A_ub=[[2, 1], [1, 1], [1, 0]], b_ub=[10, 8, 4]))
        assert_allclose(outcome.x, [2.0, 6.0])

    def test_mixed_constraints(self):
        outcome = linprog(GeneralLP.create([6.0, 3.0], A_ub=[[0, 3], [-1, -1], [-2, 1]], b_ub=[2, -1, -1]))
        assert_allclose(outcome.x, [2 / 3, 1 / 3])

    def test_degeneracy(self):
        outcome = linprog(GeneralLP.create([-2.0, -1.0], A_ub=[[3, 1], [1, -1], [0, 1]], b_ub=[6, 2, 3]))
        assert_allclose(outcome.x, [1.0, 3.0])

    def test_cyclic_recovery(self):
        c = np.array([100.0, 10.0, 1.0]) * -1
        A_ub = [[1, 0, 0], [20, 1, 0], [200, 20, 1]]
        outcome = linprog(GeneralLP.create(c, A_ub=A_ub, b_ub=[1, 100, 10000]))
        assert outcome.status.success
        assert_allclose(outcome.x, [0.0, 0.0, 10000.0])

    def test_iteration_cap(self):
        outcome = linprog(
            GeneralLP.create([-1.0, -1.0], A_ub=[[1.0, 0.0], [0.0, 1.0]], b_ub=[1.0, 1.0]),
            SolverConfig(iteration_cap=1),
        )
        assert outcome.status.hit_iteration_cap
        assert not outcome.status.success
        assert outcome.status.label == SolverStatus.ITERATION_CAP


class TestInvariants:
    @pytest.mark.parametrize("seed", range(20))
    def test_basic_columns_and_shape(self, seed):
        p = gen_random_lp(5, 4, seed)
        outcome = linprog(p)
        t = outcome.tableau
        assert t.entries.shape == (t.m + 2, t.n_c + t.m + 1)
        cols = t.entries[:t.m, outcome.basis.indices]
        assert_allclose(cols, np.eye(t.m), atol=1e-8)
        assert np.all(t.rhs >= -SolverConfig().eps_feas)

    @pytest.mark.parametrize("seed", range(20))
    def test_no_basis_repeats(self, seed):
        outcome = linprog(gen_random_lp(6, 6, seed))
        seen = _replay_bases(outcome)
        assert len(seen) == len(set(seen))
        assert outcome.status.iterations < SolverConfig().cap_for(outcome.tableau.n_c, outcome.tableau.m)

    @pytest.mark.parametrize("seed", range(10))
    def test_objective_monotone_in_phase_two(self, seed):
        canon = canonicalize(gen_random_lp(4, 5, seed))
        t, basis, feasible = phase_one(canon)
        assert feasible
        t = mark_aux_rows(t, basis)
        t.phase = 2
        previous = t.entries[t.m, -1]
        while (col := select_entering(t)) is not None:
            row = ratio_test(t, col, basis)
            assert row is not None
            t, basis = pivot(t, basis, col, row)
            # the entry holds -z
            assert t.entries[t.m, -1] >= previous - 1e-10
            previous = t.entries[t.m, -1]
        assert -previous == pytest.approx(linprog(gen_random_lp(4, 5, seed)).fun, abs=1e-9)

    def test_batch_matches_sequential_bitwise(self):
        problems = [gen_random_lp(4, 3, seed) for seed in range(1000)]
        sequential = [linprog(p) for p in problems]
        batched = solve_batch(problems, SolverConfig(chunk_size=64), workers=4)
        for a, b in zip(sequential, batched):
            assert_array_equal(a.x, b.x)
            assert a.fun == b.fun
            assert a.status == b.status
