"""Tests for tightening module - closed-form bounds under A v = g."""

import numpy as np
import pytest
import scipy.sparse as sp

from latticeinv.errors import InfeasibleRowError, ParameterError, ShapeMismatchError
from latticeinv.models import IntervalOperator
from latticeinv.tightening import check_rows, lp_tighten_oracle, tighten_bounds


def row_operator(a_l, a_u) -> IntervalOperator:
    return IntervalOperator(sp.csr_matrix(np.atleast_2d(a_l)), sp.csr_matrix(np.atleast_2d(a_u)))


def random_rows(rng, m: int, n: int):
    """Random bounds with a sampled admissible matrix A and g = A v."""
    a_l = rng.uniform(0.0, 1.0, size=(m, n))
    a_u = a_l + rng.uniform(0.0, 1.0, size=(m, n))
    A = a_l + rng.random((m, n)) * (a_u - a_l)
    v = rng.uniform(0.1, 2.0, size=n)
    return IntervalOperator(sp.csr_matrix(a_l), sp.csr_matrix(a_u)), v, A @ v, A


class TestTightenBounds:
    """Tests for tighten_bounds."""

    def test_two_entry_example(self):
        op = tighten_bounds(row_operator([0.0, 0.0], [0.3, 0.9]), [1.0, 1.0], [1.0])
        assert op.lower.toarray()[0] == pytest.approx([0.1, 0.7])
        assert op.upper.toarray()[0] == pytest.approx([0.3, 0.9])

    def test_infeasible_row(self):
        with pytest.raises(InfeasibleRowError) as exc:
            tighten_bounds(row_operator([[0.0, 0.0], [0.0, 0.0]], [[1.0, 1.0], [0.2, 0.2]]), [1.0, 1.0], [1.0, 1.0])
        assert exc.value.row == 1

    def test_zero_v_keeps_bounds(self):
        op = tighten_bounds(row_operator([0.0, 0.0], [1.0, 1.0]), [1.0, 0.0], [0.5])
        assert op.lower.toarray()[0].tolist() == [0.5, 0.0]
        assert op.upper.toarray()[0].tolist() == [0.5, 1.0]

    def test_negative_v(self):
        with pytest.raises(ParameterError):
            tighten_bounds(row_operator([0.0], [1.0]), [-1.0], [0.5])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            tighten_bounds(row_operator([0.0, 0.0], [1.0, 1.0]), [1.0], [0.5])

    def test_never_widens(self):
        rng = np.random.default_rng(1)
        op, v, g, _ = random_rows(rng, 5, 6)
        tight = tighten_bounds(op, v, g)
        assert np.all(tight.lower.data >= op.lower.data)
        assert np.all(tight.upper.data <= op.upper.data)
        assert np.all(tight.lower.data <= tight.upper.data)

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        op, v, g, _ = random_rows(rng, 8, 5)
        once = tighten_bounds(op, v, g)
        twice = tighten_bounds(once, v, g)
        assert np.allclose(twice.lower.data, once.lower.data, atol=1e-12)
        assert np.allclose(twice.upper.data, once.upper.data, atol=1e-12)

    def test_keeps_feasible_matrices(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            op, v, g, A = random_rows(rng, 3, 4)
            tight = tighten_bounds(op, v, g)
            assert np.all(tight.lower.toarray() <= A + 1e-12)
            assert np.all(A <= tight.upper.toarray() + 1e-12)

    def test_matches_lp_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            n = int(rng.integers(2, 6))
            op, v, g, _ = random_rows(rng, 1, n)
            tight = tighten_bounds(op, v, g)
            j = int(rng.integers(n))
            assert tight.lower.toarray()[0, j] == pytest.approx(lp_tighten_oracle(op, v, g, 0, j, "min"), abs=1e-9)
            assert tight.upper.toarray()[0, j] == pytest.approx(lp_tighten_oracle(op, v, g, 0, j, "max"), abs=1e-9)


class TestOracle:
    """Tests for lp_tighten_oracle and check_rows."""

    def test_example_values(self):
        op = row_operator([0.0, 0.0], [0.3, 0.9])
        assert lp_tighten_oracle(op, [1.0, 1.0], [1.0], 0, 1, "min") == pytest.approx(0.7)
        assert lp_tighten_oracle(op, [1.0, 1.0], [1.0], 0, 0, "max") == pytest.approx(0.3)

    def test_bad_direction(self):
        with pytest.raises(ParameterError):
            lp_tighten_oracle(row_operator([0.0], [1.0]), [1.0], [0.5], 0, 0, "up")

    def test_entry_outside_pattern(self):
        op = row_operator([0.5, 0.0], [1.0, 0.0])
        assert lp_tighten_oracle(op, [1.0, 1.0], [0.75], 0, 1, "max") == 0.0

    def test_infeasible(self):
        with pytest.raises(InfeasibleRowError):
            lp_tighten_oracle(row_operator([0.0, 0.0], [0.2, 0.2]), [1.0, 1.0], [1.0], 0, 0, "min")

    def test_check_rows_sums(self):
        low, high = check_rows(row_operator([0.1, 0.2], [0.3, 0.4]), np.ones(2), np.array([0.5]))
        assert low == pytest.approx([0.3])
        assert high == pytest.approx([0.7])
