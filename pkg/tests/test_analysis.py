import itertools
from fractions import Fraction

import numpy as np
import pytest
import scipy.stats

from pvbench.eval.analysis import (csi_bucket_index, csi_bucket_labels, kde, midranks,
                                   wilcoxon_signed_rank)


def enumerate_p(a, b):
    """Two-sided exact p by listing all sign patterns (mid-ranks, zeros dropped)."""
    d = np.asarray(a, float) - np.asarray(b, float)
    d = d[d != 0]
    r = scipy.stats.rankdata(np.abs(d))
    w_plus = r[d > 0].sum()
    w = min(w_plus, r.sum() - w_plus)
    hits = 0
    for signs in itertools.product((0, 1), repeat=len(r)):
        s = sum(x for x, on in zip(r, signs) if on)
        if min(s, r.sum() - s) <= w + 1e-9:
            hits += 1
    return Fraction(hits, 2 ** len(r))


def test_p_0625_fixture():
    res = wilcoxon_signed_rank([1, 2, 3, 4, 5], [0, 0, 0, 0, 0])
    assert res.method == "exact"
    assert res.p_value == pytest.approx(0.0625, abs=1e-15)
    assert res.statistic == 0


def test_exact_matches_enumeration_all_n_up_to_10():
    rng = np.random.default_rng(0)
    for n in range(5, 11):
        for _ in range(15):
            a = rng.integers(0, 6, n).astype(float)
            b = rng.integers(0, 6, n).astype(float)
            if np.count_nonzero(a - b) < 5:
                continue
            res = wilcoxon_signed_rank(a, b)
            assert res.p_value == pytest.approx(float(enumerate_p(a, b)), abs=1e-12)


def test_exact_matches_scipy_without_ties():
    rng = np.random.default_rng(1)
    for n in (6, 12, 20, 25):
        a, b = rng.normal(size=n), rng.normal(size=n) + 0.3
        ref = scipy.stats.wilcoxon(a, b, method="exact")
        assert wilcoxon_signed_rank(a, b).p_value == pytest.approx(ref.pvalue, rel=1e-10)


def test_normal_approximation_matches_scipy():
    rng = np.random.default_rng(2)
    a = np.round(rng.normal(size=300), 1)
    b = np.round(rng.normal(size=300) + 0.1, 1)
    res = wilcoxon_signed_rank(a, b)
    ref = scipy.stats.wilcoxon(a, b, method="approx", correction=False, zero_method="wilcox")
    assert res.method == "normal-approximation"
    assert res.p_value == pytest.approx(ref.pvalue, rel=1e-9)
    assert res.zeros_dropped == int(np.sum(a == b))


def test_too_few_pairs():
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([1, 2, 3], [1, 2, 3])


def test_midranks():
    np.testing.assert_array_equal(midranks(np.array([3.0, 1.0, 3.0, 2.0])), [3.5, 1, 3.5, 2])


def test_csi_buckets():
    labels = csi_bucket_labels()
    assert labels[0] == "<=0.1" and labels[1] == "(0.1,0.2]" and labels[-1] == "(0.9,1.0]"
    assert len(labels) == 10
    idx = csi_bucket_index(np.array([0.0, 0.1, 0.1000001, 0.2, 0.95, 1.0, 1.3, np.nan]))
    np.testing.assert_array_equal(idx, [0, 0, 1, 1, 9, 9, 9, -1])


def test_kde_integrates_to_one_and_bandwidth():
    rng = np.random.default_rng(3)
    v = rng.normal(2.0, 3.0, 400)
    grid, dens, h = kde(v)
    assert len(grid) == 512
    assert grid[0] == pytest.approx(v.mean() - 5 * v.std(ddof=1))
    assert grid[-1] == pytest.approx(v.mean() + 5 * v.std(ddof=1))
    assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-3)
    iqr = np.subtract(*np.percentile(v, [75, 25]))
    assert h == pytest.approx(0.9 * min(v.std(ddof=1), iqr / 1.34) * len(v) ** -0.2, rel=1e-12)
    ref = scipy.stats.gaussian_kde(v, bw_method=h / v.std(ddof=1))(grid)
    np.testing.assert_allclose(dens, ref, rtol=2e-3, atol=1e-6)
