"""Tests for lattice_sets module - U, U** membership, witnesses and sampling."""

import numpy as np
import pytest
import scipy.sparse as sp

from latticeinv.errors import NotInUError, ShapeMismatchError, UnsupportedInputError
from latticeinv.lattice_sets import (
    SampleProgress,
    boundary_points_2d,
    classify_point,
    construct_witness,
    extreme_rows_2d,
    farkas_certificate,
    farkas_oracle,
    in_Ustarstar_2d,
    toy_set_problem,
    member_U,
    member_U_norm,
    member_Ustarstar,
    member_Ustarstar_oracle,
    phi_value,
    psi_value,
    sample_feasible_set_2d,
    sample_grid_2d,
    system_alpha_beta,
    ustarstar_row,
    write_boundary_csv,
    write_samples_csv,
)
from latticeinv.lp import verify_certificate
from latticeinv.models import BoundedData, FeasibilityProblem, IntervalOperator, SideConstraint
from latticeinv.operators import data_bounds, midpoint_representation


def nonconvex_problem() -> FeasibilityProblem:
    """One row, a in [0, 1]^2, a.v = 1 with v = (1, 1), exact datum f = 1."""
    op = IntervalOperator(sp.csr_matrix(np.zeros((1, 2))), sp.csr_matrix(np.ones((1, 2))))
    return FeasibilityProblem(op, BoundedData.exact([1.0]), SideConstraint([1.0, 1.0], [1.0]))


def random_problem(rng, m: int, n: int) -> tuple[FeasibilityProblem, np.ndarray]:
    """Random interval problem and a point of U found by rejection."""
    while True:
        a_l = rng.uniform(0.0, 1.0, size=(m, n)) * (rng.random((m, n)) < 0.8)
        a_u = a_l + rng.uniform(0.0, 0.5, size=(m, n))
        u = rng.uniform(0.0, 2.0, size=n)
        f = 0.5 * (a_l + a_u) @ u + rng.uniform(-0.5, 0.5, size=m)
        c = rng.uniform(0.0, 0.3)
        problem = FeasibilityProblem(
            IntervalOperator(sp.csr_matrix(a_l), sp.csr_matrix(a_u)),
            data_bounds(f, c),
        )
        if member_U(u, problem).member:
            return problem, u


def random_row(rng, n: int):
    """Random single row with v > 0 and g, f inside their admissible ranges."""
    a_l = rng.uniform(0.0, 1.0, n)
    a_u = a_l + rng.uniform(0.0, 1.0, n)
    v = rng.uniform(0.5, 2.0, n)
    u = rng.uniform(0.0, 5.0, n)
    g = rng.uniform(a_l @ v, a_u @ v)
    f = rng.uniform(a_l @ u, a_u @ u)
    return u, v, a_l, a_u, f, g


class TestMemberU:
    """Tests for member_U and member_U_norm."""

    def _problem(self):
        return FeasibilityProblem(IntervalOperator.exact(np.eye(2)), BoundedData([1.0, 1.0], [2.0, 2.0]))

    def test_member(self):
        check = member_U([1.5, 1.5], self._problem())
        assert check.member
        assert check.violated() == []

    def test_upper_violation(self):
        check = member_U([3.0, 1.5], self._problem())
        assert not check.member
        assert check.violated() == ["A^l u <= f^u"]

    def test_negative_entry(self):
        problem = FeasibilityProblem(IntervalOperator.exact(np.eye(2)), BoundedData([-1.0, -1.0], [2.0, 2.0]))
        check = member_U([-0.5, 1.0], problem)
        assert check.violated() == ["u >= 0"]

    def test_wrong_length(self):
        with pytest.raises(ShapeMismatchError):
            member_U([1.0, 1.0, 1.0], self._problem())

    def test_norm_set_contains_U(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            problem, u = random_problem(rng, rng.integers(1, 6), rng.integers(1, 6))
            rep = midpoint_representation(problem.op, problem.data)
            assert member_U_norm(u, rep)


class TestWitness:
    """Tests for construct_witness (every u in U is explained exactly)."""

    def test_random_instances(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            problem, u = random_problem(rng, rng.integers(1, 11), rng.integers(1, 11))
            witness = construct_witness(u, problem)
            A = witness.realized_operator.toarray()
            f = witness.realized_data.vector()
            assert np.all(A >= problem.op.lower.toarray() - 1e-12)
            assert np.all(A <= problem.op.upper.toarray() + 1e-12)
            assert np.all(f >= problem.data.lower.vector() - 1e-9)
            assert np.all(f <= problem.data.upper.vector() + 1e-9)
            assert np.abs(A @ u - f).max() <= 1e-10
            assert np.all((witness.alpha >= 0) & (witness.alpha <= 1))

    def test_outside_U(self):
        problem = FeasibilityProblem(IntervalOperator.exact(np.eye(1)), BoundedData([1.0], [2.0]))
        with pytest.raises(NotInUError) as exc:
            construct_witness([5.0], problem)
        assert exc.value.violated == ["A^l u <= f^u"]

    def test_degenerate_row_uses_lower(self):
        problem = FeasibilityProblem(IntervalOperator.exact(np.eye(1)), BoundedData([1.0], [2.0]))
        witness = construct_witness([1.5], problem)
        assert witness.alpha.tolist() == [0.0]
        assert witness.realized_data.vector().tolist() == [1.5]


class TestClosedForm:
    """Tests for phi/psi and the closed-form U** row test."""

    def test_nonconvex_fixture(self):
        problem = nonconvex_problem()
        p1 = member_Ustarstar([2.0, 0.0], problem)
        p2 = member_Ustarstar([0.5, 3.0], problem)
        mid = member_Ustarstar([1.25, 1.5], problem)
        assert p1.member and p2.member
        assert p1.phi_min[0] == pytest.approx(1.0)
        assert p1.psi_min[0] == pytest.approx(1.0)
        assert p2.phi_min[0] == pytest.approx(0.5)
        assert p2.psi_min[0] == pytest.approx(2.0)
        assert not mid.member
        assert mid.phi_min[0] == pytest.approx(-0.25)
        assert mid.failing_rows == [0]
        assert member_U([1.25, 1.5], problem).member

    def test_nonconvex_fixture_oracle(self):
        problem = nonconvex_problem()
        assert member_Ustarstar_oracle([2.0, 0.0], problem)
        assert member_Ustarstar_oracle([0.5, 3.0], problem)
        assert not member_Ustarstar_oracle([1.25, 1.5], problem)

    def test_matches_oracle_on_random_rows(self):
        rng = np.random.default_rng(5)
        mismatches = 0
        for _ in range(2000):
            row = random_row(rng, int(rng.integers(2, 7)))
            verdict = ustarstar_row(*row)
            if min(abs(verdict.phi_min), abs(verdict.psi_min)) < 1e-7:
                continue
            if verdict.member() != farkas_oracle(*row):
                mismatches += 1
        assert mismatches == 0

    @pytest.mark.slow
    def test_matches_oracle_on_many_rows(self):
        rng = np.random.default_rng(6)
        for _ in range(10_000):
            row = random_row(rng, int(rng.integers(2, 7)))
            verdict = ustarstar_row(*row)
            if min(abs(verdict.phi_min), abs(verdict.psi_min)) < 1e-7:
                continue
            assert verdict.member() == farkas_oracle(*row)

    def test_minimum_over_breakpoints(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            u, v, a_l, a_u, f, g = random_row(rng, 5)
            verdict = ustarstar_row(u, v, a_l, a_u, f, g)
            ratios = u / v
            phis = [phi_value(z, u, v, a_l, a_u, f, g) for z in ratios]
            psis = [psi_value(z, u, v, a_l, a_u, f, g) for z in ratios]
            assert verdict.phi_min == pytest.approx(min(phis), abs=1e-9)
            assert verdict.psi_min == pytest.approx(min(psis), abs=1e-9)

    def test_phi_is_convex(self):
        rng = np.random.default_rng(2)
        u, v, a_l, a_u, f, g = random_row(rng, 6)
        zs = np.linspace(-1.0, 12.0, 301)
        phi = np.array([phi_value(z, u, v, a_l, a_u, f, g) for z in zs])
        psi = np.array([psi_value(z, u, v, a_l, a_u, f, g) for z in zs])
        assert np.all(phi[:-2] + phi[2:] - 2 * phi[1:-1] >= -1e-9)
        assert np.all(psi[:-2] + psi[2:] - 2 * psi[1:-1] >= -1e-9)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(3)
        u, v, a_l, a_u, f, g = random_row(rng, 6)
        perm = rng.permutation(6)
        base = ustarstar_row(u, v, a_l, a_u, f, g)
        shuffled = ustarstar_row(u[perm], v[perm], a_l[perm], a_u[perm], f, g)
        assert shuffled.phi_min == pytest.approx(base.phi_min, abs=1e-12)
        assert shuffled.psi_min == pytest.approx(base.psi_min, abs=1e-12)
        ratios = u / v
        assert ratios[perm][shuffled.k_star] == ratios[base.k_star]

    def test_empty_row(self):
        verdict = ustarstar_row([], [], [], [], 0.5, 0.0)
        assert verdict.k_star == -1
        assert verdict.phi_min == 0.5
        assert verdict.psi_min == -0.5

    def test_zero_v_rejected(self):
        with pytest.raises(UnsupportedInputError):
            ustarstar_row([1.0, 1.0], [1.0, 0.0], [0.0, 0.0], [1.0, 1.0], 1.0, 0.5)


class TestMemberUstarstarErrors:
    """Tests for the preconditions of member_Ustarstar."""

    def test_requires_side_constraint(self):
        problem = FeasibilityProblem(IntervalOperator.exact(np.eye(1)), BoundedData.exact([1.0]))
        with pytest.raises(UnsupportedInputError):
            member_Ustarstar([1.0], problem)

    def test_requires_exact_data(self):
        op = IntervalOperator(sp.csr_matrix([[0.5]]), sp.csr_matrix([[1.5]]))
        problem = FeasibilityProblem(op, BoundedData([0.5], [1.5]), SideConstraint([1.0], [1.0]))
        with pytest.raises(UnsupportedInputError):
            member_Ustarstar([1.0], problem)

    def test_requires_positive_v(self):
        op = IntervalOperator(sp.csr_matrix([[0.5, 0.5]]), sp.csr_matrix([[1.5, 1.5]]))
        problem = FeasibilityProblem(op, BoundedData.exact([1.0]), SideConstraint([1.0, 0.0], [1.0]))
        with pytest.raises(UnsupportedInputError):
            member_Ustarstar([1.0, 1.0], problem)

    def test_outside_U(self):
        with pytest.raises(NotInUError):
            member_Ustarstar([0.2, 0.2], nonconvex_problem())

    def test_report_uses_column_indices(self):
        report = member_Ustarstar([0.5, 3.0], nonconvex_problem())
        assert report.k_star[0] in (0, 1)
        assert set(report.to_dict()) == {"member", "k_star", "phi_min", "k_star_star", "psi_min", "failing_rows"}


class TestFarkas:
    """Tests for the alpha-beta system and its certificates."""

    def test_system_shape(self):
        M, rhs = system_alpha_beta([1.0, 2.0], [1.0, 1.0], [0.0, 0.0], [1.0, 1.0], 1.0, 1.0)
        assert M.shape == (6, 4)
        assert rhs.tolist() == [1.0, 2.0, 1.0, 1.0, 1.0, 1.0]

    def test_certificate_on_midpoint(self):
        cert = farkas_certificate([1.25, 1.5], [1.0, 1.0], [0.0, 0.0], [1.0, 1.0], 1.0, 1.0)
        assert cert is not None
        assert cert.y.size == 6
        M, rhs = system_alpha_beta([1.25, 1.5], [1.0, 1.0], [0.0, 0.0], [1.0, 1.0], 1.0, 1.0)
        assert verify_certificate(M, rhs, cert.y)

    def test_no_certificate_when_feasible(self):
        assert farkas_certificate([2.0, 0.0], [1.0, 1.0], [0.0, 0.0], [1.0, 1.0], 1.0, 1.0) is None

    def test_certificate_sign_pattern(self):
        rng = np.random.default_rng(8)
        checked = 0
        for _ in range(3000):
            u, v, a_l, a_u, f, g = random_row(rng, int(rng.integers(2, 6)))
            u = u + 0.1
            if not (a_l @ u < f < a_u @ u):
                continue
            cert = farkas_certificate(u, v, a_l, a_u, f, g)
            if cert is None:
                continue
            checked += 1
            assert cert.sign_product < 0
        assert checked > 0

    def test_empty_row(self):
        assert farkas_oracle([], [], [], [], 0.0, 0.0)
        assert not farkas_oracle([], [], [], [], 1.0, 0.0)
        cert = farkas_certificate([], [], [], [], 1.0, 0.0)
        assert cert is not None
        assert cert.y.size == 4


class TestSampler:
    """Tests for the 2-D feasible-set sampler."""

    def test_toy_problem_contains_generator(self):
        problem, u0 = toy_set_problem(seed=0)
        assert problem.shape == (1, 2)
        assert member_Ustarstar(u0, problem).member

    def test_toy_problem_deterministic(self):
        _, a = toy_set_problem(seed=3)
        _, b = toy_set_problem(seed=3)
        assert np.array_equal(a, b)

    def test_Ustarstar_inside_U(self):
        problem, u0 = toy_set_problem(seed=1)
        samples = sample_feasible_set_2d(problem, 400, rng_seed=2, extra_points=[u0])
        assert len(samples) == 401
        assert samples[0].in_Ustarstar
        assert not any(s.in_Ustarstar and not s.in_U for s in samples)

    def test_sampling_deterministic(self):
        problem, _ = toy_set_problem(seed=0)
        a = sample_feasible_set_2d(problem, 50, rng_seed=4, max_workers=3)
        b = sample_feasible_set_2d(problem, 50, rng_seed=4, max_workers=1)
        assert [s.to_row() for s in a] == [s.to_row() for s in b]

    def test_progress_callback(self):
        problem, _ = toy_set_problem()
        updates: list[SampleProgress] = []
        sample_feasible_set_2d(problem, 20, progress_callback=updates.append)
        assert len(updates) == 20
        assert updates[-1].completed == updates[-1].total == 20

    def test_grid_matches_oracle(self):
        problem, _ = toy_set_problem(seed=0)
        for s in sample_grid_2d(problem, resolution=25):
            if s.in_U:
                assert s.in_Ustarstar == member_Ustarstar_oracle([s.u1, s.u2], problem)

    @pytest.mark.slow
    def test_full_grid_matches_oracle(self):
        problem, _ = toy_set_problem(seed=0)
        samples = sample_grid_2d(problem, resolution=200)
        assert len(samples) == 40_000
        mismatches = sum(
            s.in_Ustarstar != member_Ustarstar_oracle([s.u1, s.u2], problem)
            for s in samples if s.in_U
        )
        assert mismatches == 0

    def test_requires_two_unknowns(self):
        problem = FeasibilityProblem(IntervalOperator.exact(np.eye(3)), BoundedData.exact([1.0, 1.0, 1.0]))
        with pytest.raises(UnsupportedInputError):
            sample_feasible_set_2d(problem, 5)

    def test_classify_point(self):
        point = classify_point([1.25, 1.5], nonconvex_problem())
        assert point.in_U and not point.in_Ustarstar

    def test_csv_output(self, tmp_path):
        problem, _ = toy_set_problem()
        path = tmp_path / "samples.csv"
        write_samples_csv(path, sample_feasible_set_2d(problem, 5))
        lines = path.read_text().splitlines()
        assert lines[0] == "u1,u2,in_U,in_Ustarstar"
        assert len(lines) == 6


class TestAnalyticBoundary:
    """Tests for the closed-form U** of one-row, two-unknown problems."""

    def test_extreme_rows(self):
        ends, f = extreme_rows_2d(nonconvex_problem())
        assert ends.tolist() == [[0.0, 1.0], [1.0, 0.0]]
        assert f == 1.0

    def test_nonconvex_membership(self):
        problem = nonconvex_problem()
        assert in_Ustarstar_2d([0.5, 2.0], problem)
        assert in_Ustarstar_2d([1.0, 1.0], problem)
        assert not in_Ustarstar_2d([1.25, 1.5], problem)
        assert not in_Ustarstar_2d([0.5, 0.5], problem)
        assert not in_Ustarstar_2d([-0.5, 2.0], problem)

    def test_crossing_point_belongs(self):
        problem, _ = toy_set_problem(seed=3)
        ends, f = extreme_rows_2d(problem)
        g = float(problem.side_constraint.g.vector()[0])
        crossing = np.full(2, f / g)
        assert ends @ crossing == pytest.approx([f, f])
        assert in_Ustarstar_2d(crossing, problem, tol=1e-9)

    def test_grid_matches_closed_form(self):
        problem, _ = toy_set_problem(seed=0)
        ends, f = extreme_rows_2d(problem)
        checked = 0
        for s in sample_grid_2d(problem, resolution=40):
            point = np.array([s.u1, s.u2])
            if np.abs(ends @ point - f).min() < 1e-6:
                continue
            assert s.in_Ustarstar == in_Ustarstar_2d(point, problem)
            checked += 1
        assert checked > 1500

    def test_random_samples_lie_between_lines(self):
        for seed in range(4):
            problem, u0 = toy_set_problem(seed=seed)
            ends, f = extreme_rows_2d(problem)
            samples = sample_feasible_set_2d(problem, 300, rng_seed=seed, extra_points=[u0])
            for s in samples:
                low, high = sorted(ends @ np.array([s.u1, s.u2]))
                if min(abs(low - f), abs(high - f)) > 1e-6:
                    assert s.in_Ustarstar == (low < f < high)

    def test_boundary_points_on_lines(self):
        problem, _ = toy_set_problem(seed=0)
        ends, f = extreme_rows_2d(problem)
        points = boundary_points_2d(problem, count=100)
        assert {line for line, _, _ in points} == {0, 1}
        for line, u1, u2 in points:
            assert 0.0 <= u1 <= 25.0 and 0.0 <= u2 <= 25.0
            assert ends[line] @ [u1, u2] == pytest.approx(f, abs=1e-9)

    def test_boundary_csv(self, tmp_path):
        problem, _ = toy_set_problem()
        path = tmp_path / "boundary.csv"
        write_boundary_csv(path, problem, count=50)
        lines = path.read_text().splitlines()
        assert lines[0] == "line,u1,u2"
        assert len(lines) == len(boundary_points_2d(problem, count=50)) + 1

    def test_requires_one_by_two(self):
        problem = FeasibilityProblem(IntervalOperator.exact(np.eye(3)), BoundedData.exact([1.0, 1.0, 1.0]))
        with pytest.raises(UnsupportedInputError):
            extreme_rows_2d(problem)

    def test_requires_exact_data(self):
        op = IntervalOperator(sp.csr_matrix(np.zeros((1, 2))), sp.csr_matrix(np.ones((1, 2))))
        problem = FeasibilityProblem(op, BoundedData([0.5], [1.0]), SideConstraint([1.0, 1.0], [1.0]))
        with pytest.raises(UnsupportedInputError):
            in_Ustarstar_2d([1.0, 1.0], problem)
