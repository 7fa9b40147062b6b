import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shortvq.errors import DegenerateMetricError
from shortvq.metrics import MetricPair, metric_pair, plcc, rankify, srcc


def brute_force_ranks(values):
    """Independent tie-averaged ranks: count comparisons per element."""
    ranks = []
    for v in values:
        less = sum(1 for w in values if w < v)
        equal = sum(1 for w in values if w == v)
        ranks.append(Fraction(2 * less + equal + 1, 2))
    return ranks


def brute_force_pearson(x, y):
    """Pearson via exact rationals; final square root in floats."""
    n = len(x)
    x = [Fraction(v) for v in x]
    y = [Fraction(v) for v in y]
    sx, sy = sum(x), sum(y)
    num = n * sum(a * b for a, b in zip(x, y)) - sx * sy
    dx = n * sum(a * a for a in x) - sx * sx
    dy = n * sum(b * b for b in y) - sy * sy
    if dx == 0 or dy == 0:
        return None
    return float(num) / math.sqrt(float(dx) * float(dy))


class TestRankify:
    @pytest.mark.parametrize(
        "values,expected",
        [
            ([10, 20, 30], [1, 2, 3]),
            ([5, 5], [1.5, 1.5]),
            ([3, 1, 3, 2], [3.5, 1, 3.5, 2]),
            ([7], [1]),
        ],
    )
    def test_examples(self, values, expected):
        assert rankify(values).tolist() == expected

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            rankify([])

    @given(st.lists(st.integers(min_value=-5, max_value=5), min_size=1, max_size=30))
    def test_matches_brute_force(self, values):
        expected = [float(r) for r in brute_force_ranks(values)]
        assert rankify(values).tolist() == expected

    @given(st.lists(st.integers(min_value=-9, max_value=9), min_size=1, max_size=30))
    def test_rank_sum_conserved(self, values):
        n = len(values)
        assert rankify(values).sum() == pytest.approx(n * (n + 1) / 2)


class TestPlcc:
    def test_perfect_linearity(self):
        x = [1.0, 2.0, 5.0, 9.0]
        assert plcc(x, [2 * v + 1 for v in x]) == pytest.approx(1.0)

    def test_perfect_antilinearity(self):
        x = [1.0, 2.0, 5.0]
        assert plcc(x, [-v for v in x]) == pytest.approx(-1.0)

    def test_frozen_example(self):
        assert plcc([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)

    def test_constant_input_degenerate(self):
        with pytest.raises(DegenerateMetricError):
            plcc([1, 1, 1], [1, 2, 3])
        with pytest.raises(DegenerateMetricError):
            plcc([1, 2, 3], [4, 4, 4])

    def test_too_short(self):
        with pytest.raises(DegenerateMetricError):
            plcc([1], [2])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            plcc([1, 2], [1, 2, 3])

    @given(
        st.lists(st.floats(min_value=-50, max_value=50), min_size=3, max_size=20),
        st.floats(min_value=0.1, max_value=10),
        st.floats(min_value=-5, max_value=5),
    )
    def test_affine_invariance(self, y, a, b):
        x = list(range(len(y)))
        try:
            base = plcc(x, y)
        except DegenerateMetricError:
            return
        assert plcc([a * v + b for v in x], y) == pytest.approx(base, abs=1e-9)
        assert plcc([-a * v + b for v in x], y) == pytest.approx(-base, abs=1e-9)


class TestSrcc:
    def test_monotone_map_is_perfect(self):
        x = [0.3, 1.2, 4.0, 9.9]
        assert srcc(x, [math.exp(v) for v in x]) == pytest.approx(1.0)

    def test_reversal(self):
        assert srcc([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)

    def test_frozen_example(self):
        # entries already coincide with their ranks, so srcc == plcc here
        assert srcc([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)

    def test_constant_ranks_degenerate(self):
        with pytest.raises(DegenerateMetricError):
            srcc([2, 2, 2], [1, 2, 3])

    @given(
        st.lists(st.integers(min_value=-20, max_value=20), min_size=3, max_size=20),
        st.sampled_from([math.exp, math.atan, lambda v: v**3, lambda v: 3 * v + 1]),
        st.sampled_from([math.exp, math.atan, lambda v: v**3, lambda v: 5 * v]),
    )
    def test_invariant_under_increasing_maps(self, x, g, h):
        y = [v + 0.5 for v in x]
        try:
            base = srcc(x, y)
        except DegenerateMetricError:
            return
        assert srcc([g(v) for v in x], [h(v) for v in y]) == pytest.approx(
            base, abs=1e-9
        )

    @settings(max_examples=200)
    @given(
        st.integers(min_value=2, max_value=8).flatmap(
            lambda n: st.tuples(
                st.lists(st.integers(min_value=0, max_value=4), min_size=n, max_size=n),
                st.lists(st.integers(min_value=0, max_value=4), min_size=n, max_size=n),
            )
        )
    )
    def test_matches_brute_force_oracle(self, xy):
        x, y = xy
        expected = brute_force_pearson(
            [float(r) for r in brute_force_ranks(x)],
            [float(r) for r in brute_force_ranks(y)],
        )
        if expected is None:
            with pytest.raises(DegenerateMetricError):
                srcc(x, y)
        else:
            assert srcc(x, y) == pytest.approx(expected, abs=1e-9)


class TestMetricPair:
    def test_format_three_decimals(self):
        assert MetricPair(srcc=0.6774, plcc=0.6789, n=100).format() == "0.677 / 0.679"
        assert MetricPair(srcc=-1.0, plcc=1.0, n=3).format() == "-1.000 / 1.000"

    def test_metric_pair_helper(self):
        pair = metric_pair([1, 2, 3, 4], [1, 3, 2, 4])
        assert pair.srcc == pytest.approx(0.8)
        assert pair.plcc == pytest.approx(0.8)
        assert pair.n == 4

    def test_n_bound(self):
        with pytest.raises(DegenerateMetricError):
            MetricPair(srcc=0.0, plcc=0.0, n=1)
