import itertools
import random

import pytest

from dims import (delta, delta_quadrics, delta_strat, fano_ambient_dim, forward_differences, identifiable,
                  identifiable_rank_constrained, incidence_dim, min_epoch_differences, multidegree_binom,
                  schubert_codim, stratification_table, threshold_table)
from models import FanoParams, MultiDegree, ParameterError, UnsupportedRegime


def multidegrees():
    for length in range(1, 5):
        for degrees in itertools.combinations_with_replacement((2, 3, 4), length):
            if degrees != (2,):
                yield MultiDegree(degrees)


def parameter_grid():
    for n in range(1, 13):
        for k in range(0, min(3, n - 1) + 1):
            for d in multidegrees():
                yield FanoParams(n, k, d)


class TestDelta:
    @pytest.mark.parametrize("n, k, degrees, expected", [
        (3, 1, (2, 2), -2),
        (4, 1, (2, 2), 0),
        (5, 1, (2, 2, 2), -1),
        (5, 1, (2, 2), 2),
        (3, 1, (3,), 0),
    ])
    def test_known_values(self, n, k, degrees, expected):
        assert delta(FanoParams(n, k, MultiDegree(degrees))) == expected

    def test_quadric_shortcut_agrees(self):
        for n in range(2, 10):
            for k in range(n):
                for s in range(1, 5):
                    assert delta_quadrics(n, s, k) == delta(FanoParams(n, k, MultiDegree.quadrics(s)))

    def test_multidegree_binom_at_minus_one(self):
        assert multidegree_binom(MultiDegree((2, 3)), -1) == 0
        assert multidegree_binom(MultiDegree((2, 3)), 1) == 3 + 4


class TestStrataIdentities:
    def test_endpoints(self):
        for p in parameter_grid():
            assert delta_strat(p, -1) == delta(p)
            assert delta_strat(p, p.k) == 0

    def test_closed_form_differences(self):
        for p in parameter_grid():
            values = {kp: delta_strat(p, kp) for kp in range(-1, p.k + 1)}
            for row in forward_differences(p):
                assert row.delta1 == values[row.k_prime + 1] - values[row.k_prime]
                if row.k_prime + 2 <= p.k:
                    second = values[row.k_prime + 2] - 2 * values[row.k_prime + 1] + values[row.k_prime]
                    assert row.delta2 == second
                assert row.delta2 >= 0

    def test_incidence_dimension_identity(self):
        for p in parameter_grid():
            for row in stratification_table(p):
                assert row.incidence_dim - row.ambient_dim == row.expected_dim
                assert row.ambient_dim == fano_ambient_dim(p)

    def test_single_quadric_has_no_difference_table(self):
        with pytest.raises(UnsupportedRegime, match="single quadric"):
            forward_differences(FanoParams(3, 1, MultiDegree((2,))))

    def test_stratification_rows(self):
        p = FanoParams(3, 1, MultiDegree((2, 2)))
        rows = stratification_table(p)
        assert [row.k_prime for row in rows] == [-1, 0, 1]
        assert [row.expected_dim for row in rows] == [-2, -1, 0]
        assert rows[1].schubert_lambda == (1,)
        assert rows[1].schubert_codim == 1
        assert rows[2].schubert_codim == 4

    def test_degenerate_stratum_flagged(self):
        rows = stratification_table(FanoParams(3, 2, MultiDegree((2, 2))))
        assert [row.degenerate for row in rows] == [True, True, False, False]
        assert rows[3].schubert_lambda == (1, 1, 1)
        assert rows[3].schubert_codim == 3

    def test_delta_strat_range(self):
        with pytest.raises(ParameterError):
            delta_strat(FanoParams(3, 1, MultiDegree((2, 2))), 2)

    def test_incidence_dim_direct(self):
        p = FanoParams(4, 1, MultiDegree((2, 2)))
        assert incidence_dim(p, -1) - fano_ambient_dim(p) == delta(p)


class TestSchubert:
    def test_codim_is_sum_of_parts(self):
        assert schubert_codim((2, 1), 4, 1) == 3
        assert schubert_codim((), 4, 1) == 0

    @pytest.mark.parametrize("partition", [(1, 2), (4,), (1, 1, 1), (-1,)])
    def test_invalid_partitions(self, partition):
        with pytest.raises(ParameterError):
            schubert_codim(partition, 4, 1)


class TestIdentifiability:
    def test_sign_test(self):
        assert identifiable(FanoParams(3, 1, MultiDegree((2, 2))))
        assert not identifiable(FanoParams(4, 1, MultiDegree((2, 2))))

    def test_single_quadric_excluded(self):
        with pytest.raises(UnsupportedRegime):
            identifiable(FanoParams(3, 1, MultiDegree((2,))))

    def test_appending_a_degree_keeps_identifiability(self):
        rng = random.Random(0)
        for _ in range(2000):
            n = rng.randint(1, 14)
            k = rng.randint(0, n - 1)
            degrees = tuple(rng.choice((2, 3, 4, 5)) for _ in range(rng.randint(1, 4)))
            if degrees == (2,):
                continue
            longer = degrees + (rng.choice((2, 3, 4, 5)),)
            if identifiable(FanoParams(n, k, MultiDegree(degrees))):
                assert identifiable(FanoParams(n, k, MultiDegree(longer)))

    def test_rank_constrained(self):
        assert identifiable_rank_constrained(5, 3, 1, 4)
        with pytest.raises(UnsupportedRegime, match="r < 2k\\+2"):
            identifiable_rank_constrained(5, 3, 1, 3)
        with pytest.raises(UnsupportedRegime):
            identifiable_rank_constrained(5, 1, 1, 4)


class TestEpochThresholds:
    def test_dominance_on_grid(self):
        for n in range(2, 65):
            for k in range(1, n):
                thresholds = min_epoch_differences(n, k)
                assert thresholds.delta_based <= thresholds.closed_form
                assert thresholds.discrepancy == (thresholds.delta_based != thresholds.closed_form)

    def test_delta_threshold_is_minimal(self):
        for n in range(2, 20):
            for k in range(1, n):
                s = min_epoch_differences(n, k).delta_based
                assert delta_quadrics(n, s, k) < 0
                assert delta_quadrics(n, s - 1, k) >= 0

    def test_known_points(self):
        equal = min_epoch_differences(3, 1)
        assert (equal.delta_based, equal.closed_form, equal.discrepancy) == (2, 2, False)
        strict = min_epoch_differences(5, 1)
        assert (strict.delta_based, strict.closed_form, strict.discrepancy) == (3, 4, True)
        assert strict.coarse_bound == 7

    def test_older_bound_needs_positive_k(self):
        assert min_epoch_differences(4, 0).coarse_bound is None

    def test_threshold_table(self):
        table = threshold_table(4)
        assert [(n, k) for n, k, _ in table] == [(2, 1), (3, 1), (3, 2), (4, 1), (4, 2), (4, 3)]
