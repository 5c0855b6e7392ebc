import math

import numpy as np
import pytest

from wordimp.agreement import (
    AgreementStats,
    DegenerateVarianceError,
    ScorePair,
    concordance,
    pearson,
    pool_pairs,
    summary_stats,
)


def oracle_ccc(xs, ys):
    """Direct evaluation of the concordance formula in pure python."""
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    sx = math.sqrt(sum((v - mx) ** 2 for v in xs) / n)
    sy = math.sqrt(sum((v - my) ** 2 for v in ys) / n)
    r = (sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / n) / (sx * sy)
    return 2 * r * sx * sy / ((my - mx) ** 2 + sx**2 + sy**2)


class TestSummaryStats:
    def test_two_values(self):
        mean, sd = summary_stats([0.2, 0.4])
        assert mean == pytest.approx(0.3, abs=1e-12)
        assert sd == pytest.approx(0.1, abs=1e-12)

    def test_single_value(self):
        assert summary_stats([5.0]) == (5.0, 0.0)

    def test_binary_values(self):
        mean, sd = summary_stats([0, 0, 1, 1])
        assert mean == 0.5
        assert sd == 0.5

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            summary_stats([])


class TestPearson:
    def test_identity(self):
        assert pearson(ScorePair([1, 2, 3], [1, 2, 3])) == 1.0

    def test_reflection(self):
        assert pearson(ScorePair([1, 2, 3], [3, 2, 1])) == -1.0

    def test_zero_variance_rejected(self):
        with pytest.raises(DegenerateVarianceError):
            pearson(ScorePair([0, 0, 0], [1, 2, 3]))

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            pearson(ScorePair([1.0], [2.0]))


class TestConcordance:
    def test_perfect_agreement(self):
        stats = concordance(ScorePair([0.1, 0.5, 0.9], [0.1, 0.5, 0.9]))
        assert stats.ccc == 1.0

    def test_perfect_disagreement(self):
        # means 0.3/0.3, population SDs 0.1/0.1, r=-1 -> -0.02/0.02
        stats = concordance(ScorePair([0.2, 0.4], [0.4, 0.2]))
        assert stats.ccc == pytest.approx(-1.0, abs=1e-12)

    def test_shrunk_copy(self):
        # r=1, sd_x=0.5, sd_y=0.45, equal means -> 0.45/0.4525
        stats = concordance(ScorePair([0, 0, 1, 1], [0.05, 0.05, 0.95, 0.95]))
        assert stats.ccc == pytest.approx(0.45 / 0.4525, abs=1e-12)
        assert stats.ccc == pytest.approx(0.9945, abs=1e-4)

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        x = rng.random(50).tolist()
        y = rng.random(50).tolist()
        assert concordance(ScorePair(x, y)).ccc == pytest.approx(
            concordance(ScorePair(y, x)).ccc, abs=1e-12
        )

    def test_equals_pearson_when_means_and_sds_match(self):
        x = [0.1, 0.2, 0.3, 0.4]
        y = [0.4, 0.3, 0.2, 0.1]  # same mean and SD, reversed
        stats = concordance(ScorePair(x, y))
        assert stats.ccc == pytest.approx(stats.pearson, abs=1e-12)

    def test_constant_shift_decreases_magnitude_but_not_pearson(self):
        rng = np.random.default_rng(2)
        x = rng.random(40).tolist()
        y = (np.asarray(x) * 0.9 + 0.03).tolist()
        base = concordance(ScorePair(x, y))
        shifted = concordance(ScorePair(x, [v + 0.25 for v in y]))
        assert shifted.pearson == pytest.approx(base.pearson, abs=1e-12)
        assert abs(shifted.ccc) < abs(base.ccc)

    def test_ccc_magnitude_bounded_by_pearson(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            x = rng.random(20).tolist()
            y = rng.random(20).tolist()
            stats = concordance(ScorePair(x, y))
            assert abs(stats.ccc) <= abs(stats.pearson) + 1e-12
            assert -1.0 <= stats.ccc <= 1.0

    def test_matches_direct_formula_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            x = rng.random(50).tolist()
            y = rng.random(50).tolist()
            assert concordance(ScorePair(x, y)).ccc == pytest.approx(
                oracle_ccc(x, y), abs=1e-10
            )

    def test_propagates_degenerate_variance(self):
        with pytest.raises(DegenerateVarianceError):
            concordance(ScorePair([0.5, 0.5], [0.1, 0.9]))


class TestScorePair:
    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ScorePair([1.0], [1.0, 2.0])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ScorePair([], [])

    def test_pooling_concatenates(self):
        pooled = pool_pairs([ScorePair([1, 2], [3, 4]), ScorePair([5], [6])])
        assert pooled.x == (1.0, 2.0, 5.0)
        assert pooled.y == (3.0, 4.0, 6.0)

    def test_pooling_nothing_rejected(self):
        with pytest.raises(ValueError, match="empty overlap"):
            pool_pairs([])


def test_stats_dataclass_fields():
    stats = concordance(ScorePair([0.0, 1.0], [0.0, 1.0]))
    assert isinstance(stats, AgreementStats)
    assert stats.n == 2
    assert stats.mean_x == 0.5 and stats.sd_x == 0.5
