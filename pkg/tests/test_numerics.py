import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smoothcert.errors import ArgumentError, DomainError
from smoothcert.numerics import (
    binomial_two_sided_pvalue,
    clopper_pearson_lower,
    regularized_incomplete_beta,
    std_normal_cdf,
    std_normal_quantile,
)

# Expected values frozen from an erf/beta oracle evaluated before the
# implementation existed (scipy.stats.norm / scipy.stats.beta / binomtest).
PHI_1 = 0.8413447460685429
PHIINV_0975 = 1.959963984540054
CP_50_100_005 = 0.41362171463091163


def test_cdf_center_and_symmetry():
    assert std_normal_cdf(0.0) == 0.5
    for z in [0.3, 1.0, 2.5, 4.0, 7.5]:
        assert std_normal_cdf(-z) == pytest.approx(1.0 - std_normal_cdf(z), abs=1e-14)


def test_cdf_oracle_values():
    assert std_normal_cdf(1.0) == pytest.approx(PHI_1, abs=1e-12)
    assert std_normal_cdf(-8.0) < 1e-14


def test_cdf_monotone():
    zs = np.linspace(-8, 8, 400)
    vals = [std_normal_cdf(z) for z in zs]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_cdf_rejects_nonfinite():
    with pytest.raises(DomainError):
        std_normal_cdf(float("nan"))
    with pytest.raises(DomainError):
        std_normal_cdf(float("inf"))


def test_quantile_median_and_oracles():
    assert std_normal_quantile(0.5) == 0.0
    assert std_normal_quantile(PHI_1) == pytest.approx(1.0, abs=1e-9)
    assert std_normal_quantile(0.975) == pytest.approx(PHIINV_0975, abs=1e-8)


def test_quantile_roundtrip_forward():
    for p in [1e-12, 1e-6, 0.01, 0.3, 0.5, 0.9, 1 - 1e-6, 1 - 1e-12]:
        assert std_normal_cdf(std_normal_quantile(p)) == pytest.approx(p, abs=1e-10)


def test_quantile_roundtrip_z():
    for z in np.linspace(-6, 6, 121):
        assert std_normal_quantile(std_normal_cdf(z)) == pytest.approx(z, abs=1e-8)


def test_quantile_strictly_increasing():
    ps = np.linspace(1e-9, 1 - 1e-9, 500)
    qs = [std_normal_quantile(p) for p in ps]
    assert all(b > a for a, b in zip(qs, qs[1:]))


def test_quantile_domain_errors():
    for p in [0.0, 1.0, -0.1, 1.1]:
        with pytest.raises(DomainError):
            std_normal_quantile(p)


def test_clopper_pearson_edges():
    assert clopper_pearson_lower(0, 100, 0.001) == 0.0
    assert clopper_pearson_lower(100, 100, 0.001) == pytest.approx(0.001 ** (1 / 100), abs=1e-9)
    assert clopper_pearson_lower(50, 100, 0.05) == pytest.approx(CP_50_100_005, abs=1e-9)


def test_clopper_pearson_argument_errors():
    with pytest.raises(ArgumentError):
        clopper_pearson_lower(5, 4, 0.05)
    with pytest.raises(ArgumentError):
        clopper_pearson_lower(0, 0, 0.05)
    with pytest.raises(DomainError):
        clopper_pearson_lower(5, 10, 0.0)


def test_clopper_pearson_against_beta_oracle():
    beta = pytest.importorskip("scipy.stats").beta
    for k, n, alpha in [(1, 10, 0.01), (7, 20, 0.001), (250, 500, 0.05), (9000, 10000, 0.001)]:
        expected = beta.ppf(alpha, k, n - k + 1)
        assert clopper_pearson_lower(k, n, alpha) == pytest.approx(expected, abs=1e-10)


def test_clopper_pearson_monotone_in_successes():
    values = [clopper_pearson_lower(k, 50, 0.01) for k in range(51)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_clopper_pearson_monotone_in_alpha():
    # larger alpha (weaker confidence) gives a larger lower bound
    bounds = [clopper_pearson_lower(30, 50, a) for a in (0.0001, 0.001, 0.01, 0.1)]
    assert all(b >= a for a, b in zip(bounds, bounds[1:]))


@given(
    k=st.integers(min_value=0, max_value=200),
    n=st.integers(min_value=1, max_value=200),
    alpha=st.floats(min_value=1e-6, max_value=0.5),
)
@settings(max_examples=200, deadline=None)
def test_clopper_pearson_below_empirical_mean(k, n, alpha):
    if k > n:
        k = n
    lower = clopper_pearson_lower(k, n, alpha)
    assert 0.0 <= lower <= 1.0
    assert lower <= k / n + 1e-12


def test_coverage_simulation():
    # the bound may exceed the true p with frequency at most alpha
    alpha = 0.05
    gen = np.random.default_rng(1234)
    for p in (0.1, 0.5, 0.9):
        n = 100
        table = np.array([clopper_pearson_lower(k, n, alpha) for k in range(n + 1)])
        draws = gen.binomial(n, p, size=20000)
        violations = np.mean(table[draws] > p)
        stderr = math.sqrt(alpha * (1 - alpha) / 20000)
        assert violations <= alpha + 3 * stderr


def test_binomial_pvalue_examples():
    assert binomial_two_sided_pvalue(50, 100, 0.5) == pytest.approx(1.0, abs=1e-9)
    assert binomial_two_sided_pvalue(100, 100, 0.5) == pytest.approx(2 * 0.5**100, rel=1e-9)
    assert binomial_two_sided_pvalue(0, 1, 0.5) == pytest.approx(1.0, abs=1e-12)


def test_binomial_pvalue_against_scipy():
    stats = pytest.importorskip("scipy.stats")
    for k, n, p0 in [(60, 100, 0.5), (7, 10, 0.3), (3, 50, 0.2), (499, 1000, 0.5)]:
        expected = stats.binomtest(k, n, p0).pvalue
        assert binomial_two_sided_pvalue(k, n, p0) == pytest.approx(expected, rel=1e-9)


def test_binomial_pvalue_degenerate_p0():
    assert binomial_two_sided_pvalue(0, 5, 0.0) == 1.0
    assert binomial_two_sided_pvalue(1, 5, 0.0) == 0.0
    assert binomial_two_sided_pvalue(5, 5, 1.0) == 1.0
    assert binomial_two_sided_pvalue(4, 5, 1.0) == 0.0


def test_binomial_pvalue_arguments():
    with pytest.raises(ArgumentError):
        binomial_two_sided_pvalue(2, 0, 0.5)
    with pytest.raises(ArgumentError):
        binomial_two_sided_pvalue(5, 4, 0.5)
    with pytest.raises(DomainError):
        binomial_two_sided_pvalue(1, 2, 1.5)


def test_incomplete_beta_basics():
    assert regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0
    assert regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0
    # I_x(1,1) is the uniform CDF
    assert regularized_incomplete_beta(1.0, 1.0, 0.37) == pytest.approx(0.37, abs=1e-12)
    # symmetry I_x(a,b) = 1 - I_{1-x}(b,a)
    assert regularized_incomplete_beta(3.5, 2.2, 0.3) == pytest.approx(
        1.0 - regularized_incomplete_beta(2.2, 3.5, 0.7), abs=1e-12
    )
