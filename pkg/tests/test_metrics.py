import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cleval.errors import ContractViolation
from cleval.metrics import (
    MetricPair,
    TaskAccuracySeries,
    accuracy,
    avg_acc,
    harmonic_mean,
    select_best_set,
)

fractions = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


class TestAccuracy:
    def test_identity(self):
        assert accuracy([1, 2, 3], [1, 2, 3]) == 1.0

    def test_one_of_three(self):
        assert accuracy([1, 1, 1], [1, 2, 3]) == pytest.approx(1 / 3)

    def test_disjoint(self):
        assert accuracy([0, 0], [1, 1]) == 0.0

    def test_empty_rejected(self):
        with pytest.raises(ContractViolation):
            accuracy([], [])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ContractViolation):
            accuracy([1, 2], [1])


class TestAvgAcc:
    def test_symmetric_mean(self):
        assert avg_acc([0.8, 0.6, 0.4]) == pytest.approx(0.6)

    def test_constant_series(self):
        assert avg_acc([0.37] * 9) == pytest.approx(0.37)

    def test_hand_arithmetic(self):
        # (1.0 + 0.5) / 2
        assert avg_acc([1.0, 0.5]) == 0.75

    def test_empty_rejected(self):
        with pytest.raises(ContractViolation):
            avg_acc([])

    @given(st.lists(fractions, min_size=1, max_size=30))
    def test_matches_sum_divide_oracle(self, values):
        oracle = math.fsum(values) / len(values)
        assert avg_acc(values) == pytest.approx(oracle, rel=1e-12, abs=1e-15)


class TestHarmonicMean:
    def test_equal_arguments(self):
        assert harmonic_mean(0.42, 0.42) == pytest.approx(0.42)

    def test_zero_annihilates(self):
        assert harmonic_mean(0.0, 0.9) == 0.0
        assert harmonic_mean(0.9, 0.0) == 0.0

    def test_degenerate_pair_is_zero(self):
        assert harmonic_mean(0.0, 0.0) == 0.0

    def test_percentage_scale_fixture(self):
        # hand-evaluated 2ab/(a+b) at (47.01, 67.14)
        assert harmonic_mean(47.01, 67.14) == pytest.approx(55.3000683, abs=1e-6)

    def test_negative_rejected(self):
        with pytest.raises(ContractViolation):
            harmonic_mean(-0.1, 0.5)

    @given(st.floats(0, 100, allow_nan=False), st.floats(0, 100, allow_nan=False))
    def test_mean_inequality_chain(self, a, b):
        hm = harmonic_mean(a, b)
        gm = math.sqrt(a * b)
        am = (a + b) / 2
        assert hm <= gm + 1e-9
        assert gm <= am + 1e-9


def _pair(acc, avg):
    return MetricPair(acc=acc, avg_acc=avg)


class TestSelectBestSet:
    def test_prefers_balanced_pair(self):
        # HM(0.5, 0.7) ~ 0.5833 < HM(0.6, 0.6) = 0.6
        records = [("H1", _pair(0.5, 0.7)), ("H2", _pair(0.6, 0.6))]
        assert select_best_set(records) == "H2"

    def test_singleton(self):
        assert select_best_set([("only", _pair(0.4, 0.4))]) == "only"

    def test_tie_breaks_to_lowest_index(self):
        records = [("H1", _pair(0.6, 0.6)), ("H2", _pair(0.6, 0.6))]
        assert select_best_set(records) == "H1"

    def test_empty_rejected(self):
        with pytest.raises(ContractViolation):
            select_best_set([])

    def test_matches_exhaustive_argmax_on_fuzzed_tables(self):
        rng = np.random.default_rng(2024)
        for _ in range(300):
            n = int(rng.integers(1, 12))
            table = [
                (i, _pair(float(rng.uniform()), float(rng.uniform())))
                for i in range(n)
            ]
            scores = [harmonic_mean(p.acc, p.avg_acc) for _, p in table]
            best = max(range(n), key=lambda i: (scores[i], -i))
            assert select_best_set(table) == best

    def test_permutation_invariance_without_ties(self):
        rng = np.random.default_rng(7)
        table = [(i, _pair(float(rng.uniform()), float(rng.uniform()))) for i in range(8)]
        winner = select_best_set(table)
        for _ in range(5):
            perm = list(rng.permutation(len(table)))
            assert select_best_set([table[i] for i in perm]) == winner


class TestSeriesTypes:
    def test_series_validates_range(self):
        with pytest.raises(ContractViolation):
            TaskAccuracySeries(values=(0.5, 1.2))

    def test_pair_from_series(self):
        series = TaskAccuracySeries(values=(0.9, 0.7, 0.5))
        pair = MetricPair.from_series(series)
        assert pair.acc == 0.5
        assert pair.avg_acc == pytest.approx(0.7)
