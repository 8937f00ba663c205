import numpy as np
import pytest
import scipy.stats

from pegshare.errors import InsufficientDataError
from pegshare.stats import stats_compare, welch_t_test, wilcoxon_signed_rank

from oracles import welch_oracle


class TestWilcoxon:
    def test_identical_samples(self):
        a = np.arange(10, dtype=float)
        out = wilcoxon_signed_rank(a, a)
        assert out["p"] == 1.0
        assert out["n_used"] == 0

    def test_all_one_sided_exact(self):
        a = np.arange(10, dtype=float) + 1.0
        b = np.arange(10, dtype=float)
        out = wilcoxon_signed_rank(a, b)
        assert out["p"] == pytest.approx(2.0 / 2 ** 10)

    def test_matches_scipy_exact(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            n = rng.integers(6, 20)
            a = rng.normal(0, 1, n)
            b = a + rng.normal(0.3, 1, n)
            # avoid exact zeros and ties so conventions align
            out = wilcoxon_signed_rank(a, b)
            ref = scipy.stats.wilcoxon(a, b, mode="exact")
            assert out["p"] == pytest.approx(ref.pvalue, abs=1e-10)

    def test_normal_approx_large_n(self):
        rng = np.random.default_rng(1)
        a = rng.normal(0, 1, 40)
        b = a + rng.normal(0.5, 0.5, 40)
        out = wilcoxon_signed_rank(a, b)
        ref = scipy.stats.wilcoxon(a, b, mode="approx", correction=True)
        assert out["p"] == pytest.approx(ref.pvalue, rel=1e-6)

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            wilcoxon_signed_rank([1.0] * 5, [2.0] * 5)


class TestWelch:
    def test_textbook_oracle(self):
        a = np.array([27.5, 21.0, 19.0, 23.6, 17.0])
        b = np.array([27.1, 22.0, 20.8, 23.4, 23.4])
        t_o, dof_o = welch_oracle(a, b)
        out = welch_t_test(a, b)
        assert out["statistic"] == pytest.approx(t_o, abs=1e-6)
        assert out["dof"] == pytest.approx(dof_o, abs=1e-6)
        ref = scipy.stats.ttest_ind(a, b, equal_var=False)
        assert out["p"] == pytest.approx(ref.pvalue, abs=1e-6)

    def test_equal_samples(self):
        a = np.array([1.0, 2.0, 3.0])
        out = welch_t_test(a, a)
        assert out["p"] == pytest.approx(1.0)


class TestCompare:
    def test_summary(self):
        rng = np.random.default_rng(2)
        a = rng.normal(10, 1, 12)
        b = a - 2.0
        out = stats_compare(a, b)
        assert out["wilcoxon_p"] < 0.01
        assert out["medians"][0] > out["medians"][1]
        assert out["means"][0] == pytest.approx(out["means"][1] + 2.0)
