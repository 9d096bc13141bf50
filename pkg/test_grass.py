import math

import numpy as np
import pytest

from exactla import FieldDesc, Matrix, rank_exact, rref
from grass import (ChartPoint, Plane, adapted_basis, canonicalize, chart_coordinates, chart_plane,
                   check_budget, coordinate_plane, enumerate_planes, enumeration_key, float_plane,
                   gaussian_binomial, intersection_dim, partition_ranges, plane_batches, random_plane,
                   subspace_distance)
from models import BudgetExceeded, ParameterError

Q = FieldDesc.rational()


class TestCanonicalForm:
    def test_same_row_space_same_plane(self):
        a = Plane.from_rows([[1, 2, 0, 1], [0, 1, 1, 1]], Q)
        b = Plane.from_rows([[1, 3, 1, 2], [2, 5, 1, 3]], Q)
        assert a == b

    def test_rank_deficient_basis(self):
        with pytest.raises(ParameterError, match="rank"):
            Plane.from_rows([[1, 2, 3], [2, 4, 6]], Q)

    def test_float_planes_keep_their_basis(self):
        plane = float_plane([[1.0, 0.0, 0.0], [0.0, 0.6, 0.8]])
        assert plane.k == 1 and plane.basis[1, 2] == 0.8

    def test_adapted_basis_invertible(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            plane = random_plane(4, 2, rng)
            M = adapted_basis(plane)
            assert rank_exact(M) == 5
            assert M.rows[:3] == plane.basis.rows


class TestChart:
    def test_origin_is_base(self):
        base = random_plane(4, 1, np.random.default_rng(1))
        origin = ChartPoint(base, Matrix.zeros(2, 3, Q))
        assert chart_plane(origin) == base

    def test_coordinates_invert_chart(self):
        rng = np.random.default_rng(2)
        base = random_plane(4, 1, rng)
        X = Matrix.from_rows(rng.integers(-4, 5, size=(2, 3)).tolist(), Q)
        point = ChartPoint(base, X)
        assert chart_coordinates(base, chart_plane(point)).X == X

    def test_outside_chart(self):
        base = coordinate_plane(3, 1, Q)
        with pytest.raises(ParameterError, match="outside the chart"):
            chart_coordinates(base, Plane.from_rows([[0, 0, 1, 0], [0, 0, 0, 1]], Q))

    def test_chart_shape_checked(self):
        with pytest.raises(ParameterError):
            ChartPoint(coordinate_plane(3, 1, Q), Matrix.zeros(4, 2, Q))


class TestIntersections:
    @pytest.mark.parametrize("rows, expected", [
        ([[1, 0, 0, 0], [0, 1, 0, 0]], 1),
        ([[1, 0, 0, 0], [0, 0, 1, 0]], 0),
        ([[0, 0, 1, 0], [0, 0, 0, 1]], -1),
    ])
    def test_lines_in_p3(self, rows, expected):
        L = coordinate_plane(3, 1, Q)
        assert intersection_dim(L, Plane.from_rows(rows, Q)) == expected

    def test_different_ambients(self):
        with pytest.raises(ParameterError):
            intersection_dim(coordinate_plane(3, 1, Q), coordinate_plane(4, 1, Q))


class TestEnumeration:
    def test_gaussian_binomial_values(self):
        assert gaussian_binomial(3, 1, 3) == 130
        assert gaussian_binomial(2, 0, 3) == 13
        assert gaussian_binomial(3, 4, 3) == 0

    @pytest.mark.parametrize("q", [3, 5, 7, 11])
    def test_counts_match_gaussian_binomials(self, q):
        for n in range(1, 5):
            for k in range(0, min(2, n - 1) + 1):
                count = sum(len(batch) for _, batch in plane_batches(n, k, q))
                assert count == gaussian_binomial(n, k, q)

    def test_planes_distinct_and_reduced(self):
        planes = list(enumerate_planes(3, 1, 3))
        assert len(planes) == 130
        assert len({p.basis.rows for p in planes}) == 130
        for plane in planes[::7]:
            reduced, _ = rref(plane.basis)
            assert reduced == plane.basis

    def test_order_matches_enumeration_key(self):
        planes = list(enumerate_planes(3, 1, 5))
        keys = [enumeration_key(p) for p in planes]
        assert keys == sorted(keys)

    def test_partitioned_stream_reassembles(self):
        n, k, q = 3, 1, 5
        total = gaussian_binomial(n, k, q)
        full = np.concatenate([batch for _, batch in plane_batches(n, k, q, chunk_size=64)])
        parts = []
        for index_range in partition_ranges(total, 4):
            for start, batch in plane_batches(n, k, q, chunk_size=50, index_range=index_range):
                parts.append((start, batch))
        merged = np.concatenate([batch for _, batch in sorted(parts, key=lambda item: item[0])])
        assert np.array_equal(full, merged)

    def test_partition_ranges(self):
        assert partition_ranges(10, 3) == [(0, 4), (4, 8), (8, 10)]
        assert partition_ranges(0, 3) == []
        with pytest.raises(ParameterError):
            partition_ranges(10, 0)

    def test_budget(self):
        with pytest.raises(BudgetExceeded):
            check_budget(4, 1, 11, budget=1000)
        assert check_budget(4, 1, 11, budget=1000, allow_large=True) == gaussian_binomial(4, 1, 11)
        with pytest.raises(BudgetExceeded):
            next(enumerate_planes(4, 1, 11, budget=10))

    def test_non_prime_q(self):
        with pytest.raises(ParameterError):
            next(plane_batches(3, 1, 4))


class TestDistances:
    def test_identical_and_orthogonal(self):
        a = float_plane([[1.0, 0.0, 0.0]])
        b = float_plane([[0.0, 1.0, 0.0]])
        assert subspace_distance(a, a)[0] == pytest.approx(0.0, abs=1e-12)
        chordal, angle = subspace_distance(a, b)
        assert chordal == pytest.approx(1.0)
        assert angle == pytest.approx(math.pi / 2)

    def test_basis_independent(self):
        rng = np.random.default_rng(3)
        plane = random_plane(5, 1, rng, field=FieldDesc.float64())
        mixed = float_plane(rng.standard_normal((2, 2)) @ plane.basis.to_numpy())
        assert subspace_distance(plane, mixed)[1] < 1e-8

    def test_dimension_mismatch(self):
        with pytest.raises(ParameterError):
            subspace_distance(float_plane(np.eye(3)[:1]), float_plane(np.eye(3)[:2]))

    def test_float_random_plane_orthonormal(self):
        plane = random_plane(4, 2, np.random.default_rng(4), field=FieldDesc.float64())
        B = plane.basis.to_numpy()
        assert np.allclose(B @ B.T, np.eye(3))

    def test_canonicalize_float(self):
        plane = canonicalize(Matrix.from_numpy(np.array([[1.0, 2.0, 3.0]])))
        assert plane.n == 2 and plane.k == 0


def invertible_mix(rng, size, field):
    while True:
        T = Matrix.from_rows(rng.integers(-5, 6, size=(size, size)).tolist(), field)
        if rank_exact(T) == size:
            return T


def plane_pairs(count, seed):
    """Random planes in a shared P^n, every third pair sharing basis rows"""
    rng = np.random.default_rng(seed)
    for case in range(count):
        n = int(rng.integers(2, 6))
        k1, k2 = (int(x) for x in rng.integers(0, min(2, n - 1) + 1, size=2))
        L1 = random_plane(n, k1, rng, bound=3)
        if case % 3 == 0:
            shared = int(rng.integers(1, min(k1, k2) + 2))
            rows = [list(row) for row in L1.basis.rows[:shared]]
            rows += rng.integers(-3, 4, size=(k2 + 1 - shared, n + 1)).tolist()
            try:
                L2 = Plane.from_rows(rows, Q)
            except ParameterError:
                L2 = random_plane(n, k2, rng, bound=3)
        else:
            L2 = random_plane(n, k2, rng, bound=3)
        yield L1, L2


class TestPlaneInvariants:
    def test_canonical_form_ignores_row_mixing(self):
        rng = np.random.default_rng(10)
        for _ in range(500):
            n = int(rng.integers(1, 6))
            k = int(rng.integers(0, min(2, n - 1) + 1))
            plane = random_plane(n, k, rng)
            mixed = invertible_mix(rng, k + 1, Q) @ plane.basis
            assert canonicalize(mixed) == plane
            assert canonicalize(plane.basis) == plane

    def test_intersection_symmetric_and_bounded(self):
        for L1, L2 in plane_pairs(300, seed=11):
            dim = intersection_dim(L1, L2)
            assert dim == intersection_dim(L2, L1)
            assert -1 <= dim <= min(L1.k, L2.k)
            if L1.k == L2.k:
                assert (dim == L1.k) == (L1 == L2)

    def test_chart_distance_from_base_is_rank_of_coordinates(self):
        rng = np.random.default_rng(12)
        for _ in range(200):
            n = int(rng.integers(2, 6))
            k = int(rng.integers(0, min(2, n - 1) + 1))
            base = random_plane(n, k, rng)
            r = int(rng.integers(0, min(k + 1, n - k) + 1))
            A = rng.integers(-3, 4, size=(k + 1, r))
            B = rng.integers(-3, 4, size=(r, n - k))
            X = Matrix.from_rows((A @ B).tolist(), Q)
            moved = chart_plane(ChartPoint(base, X))
            assert intersection_dim(moved, base) == k - rank_exact(X)


@pytest.mark.parametrize("theta", [0.1, 0.7, 1.3])
def test_principal_angle_of_rotated_point(theta):
    a = float_plane([[1.0, 0.0]])
    b = float_plane([[math.cos(theta), math.sin(theta)]])
    chordal, angle = subspace_distance(a, b)
    assert angle == pytest.approx(theta, abs=1e-12)
    assert chordal == pytest.approx(math.sin(theta), abs=1e-12)
