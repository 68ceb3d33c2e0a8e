"""Exact statistical primitives used by the certification machinery.

Everything here is scalar, pure, and 64-bit: standard-normal CDF and
quantile, the exact Clopper-Pearson one-sided lower confidence bound,
and a two-sided exact binomial test. Confidence bounds are computed by
bisection on the regularized incomplete beta function (evaluated by
continued fraction), never by normal approximation, so soundness does
not depend on an approximation regime.
"""

from __future__ import annotations

import math

from .errors import ArgumentError, DomainError

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def validate_probability(p: float, name: str = "p") -> float:
    """Check p is a finite real in [0, 1] and return it."""
    p = float(p)
    if not (0.0 <= p <= 1.0):
        raise DomainError(f"{name} must lie in [0, 1], got {p!r}")
    return p


def validate_alpha(alpha: float) -> float:
    """Check alpha is a confidence level strictly inside (0, 1)."""
    alpha = float(alpha)
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    return alpha


def std_normal_cdf(z: float) -> float:
    """Standard normal CDF, accurate to ~1 ulp over the full double range."""
    z = float(z)
    if math.isnan(z) or math.isinf(z):
        raise DomainError(f"z must be finite, got {z!r}")
    return 0.5 * math.erfc(-z / _SQRT2)


def _std_normal_pdf(z: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * z * z)


# Rational approximation (Acklam) used only as the initial guess for the
# quantile; the Halley refinements below take it to machine precision.
_ACKLAM_A = (
    -3.969683028665376e01,
    2.209460984245205e02,
    -2.759285104469687e02,
    1.383577518672690e02,
    -3.066479806614716e01,
    2.506628277459239e00,
)
_ACKLAM_B = (
    -5.447609879822406e01,
    1.615858368580409e02,
    -1.556989798598866e02,
    6.680131188771972e01,
    -1.328068155288572e01,
)
_ACKLAM_C = (
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e00,
    -2.549732539343734e00,
    4.374664141464968e00,
    2.938163982698783e00,
)
_ACKLAM_D = (
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e00,
    3.754408661907416e00,
)


def _quantile_initial(p: float) -> float:
    a, b, c, d = _ACKLAM_A, _ACKLAM_B, _ACKLAM_C, _ACKLAM_D
    p_low = 0.02425
    if p < p_low:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        )
    if p > 1.0 - p_low:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        )
    q = p - 0.5
    r = q * q
    return (
        (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5])
        * q
        / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    )


def _cdf_residual(x: float, p: float) -> float:
    # Phi(x) - p, arranged so the dominant term is the small tail mass.
    # For p >= 1/2 the subtraction 1 - p is exact (Sterbenz), so the
    # residual keeps full relative accuracy deep into either tail.
    if x > 0.0:
        return (1.0 - p) - 0.5 * math.erfc(x / _SQRT2)
    return 0.5 * math.erfc(-x / _SQRT2) - p


def std_normal_quantile(p: float) -> float:
    """Inverse standard normal CDF.

    Rational initial estimate refined by at most three Halley steps on the
    erfc-based CDF. Raises DomainError at p in {0, 1}; callers that need
    the infinite-radius limit must handle it explicitly.
    """
    p = float(p)
    if not (0.0 < p < 1.0):
        raise DomainError(f"quantile requires 0 < p < 1, got {p!r}")
    if p == 0.5:
        return 0.0
    x = _quantile_initial(p)
    for _ in range(3):
        err = _cdf_residual(x, p)
        pdf = _std_normal_pdf(x)
        if pdf <= 0.0:
            break
        u = err / pdf
        step = u / (1.0 + 0.5 * x * u)  # Halley
        x -= step
        if abs(step) < 1e-15 * max(1.0, abs(x)):
            break
    return x


def _log_beta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def _betacf(a: float, b: float, x: float) -> float:
    # Continued fraction for the incomplete beta function, modified
    # Lentz's method.
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0.0 or b <= 0.0:
        raise DomainError("incomplete beta requires a, b > 0")
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"incomplete beta requires x in [0, 1], got {x!r}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    front = math.exp(
        a * math.log(x) + b * math.log1p(-x) - _log_beta(a, b)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def clopper_pearson_lower(successes: int, trials: int, alpha: float) -> float:
    """Exact one-sided (1 - alpha) lower confidence bound on a binomial proportion.

    Solves I_p(k, n - k + 1) = alpha by bisection; 0 when k = 0 and
    alpha**(1/n) when k = n.
    """
    alpha = validate_alpha(alpha)
    if trials < 1:
        raise ArgumentError(f"trials must be >= 1, got {trials}")
    if not (0 <= successes <= trials):
        raise ArgumentError(
            f"successes must lie in [0, trials], got {successes}/{trials}"
        )
    k, n = int(successes), int(trials)
    if k == 0:
        return 0.0
    if k == n:
        return alpha ** (1.0 / n)
    a = float(k)
    b = float(n - k + 1)
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if regularized_incomplete_beta(a, b, mid) < alpha:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


_LOG_FACTORIALS: list[float] = [0.0]


def _log_factorial(m: int) -> float:
    table = _LOG_FACTORIALS
    while len(table) <= m:
        table.append(math.lgamma(len(table) + 1.0))
    return table[m]


def binomial_two_sided_pvalue(successes: int, trials: int, p0: float) -> float:
    """Two-sided exact binomial test of H0: success probability = p0.

    Uses the minimum-likelihood rule: the p-value sums the probabilities of
    all outcomes no more likely than the observed one.
    """
    p0 = validate_probability(p0, "p0")
    if trials < 1:
        raise ArgumentError(f"trials must be >= 1, got {trials}")
    if not (0 <= successes <= trials):
        raise ArgumentError(
            f"successes must lie in [0, trials], got {successes}/{trials}"
        )
    k, n = int(successes), int(trials)
    if p0 == 0.0:
        return 1.0 if k == 0 else 0.0
    if p0 == 1.0:
        return 1.0 if k == n else 0.0

    log_p = math.log(p0)
    log_q = math.log1p(-p0)

    def log_pmf(i: int) -> float:
        return (
            _log_factorial(n)
            - _log_factorial(i)
            - _log_factorial(n - i)
            + i * log_p
            + (n - i) * log_q
        )

    log_obs = log_pmf(k)
    # Relative tolerance when deciding ties, matching common practice for
    # exact tests so floating-point noise cannot drop a symmetric outcome.
    cutoff = log_obs + math.log1p(1e-7)
    total = 0.0
    for i in range(n + 1):
        lp = log_pmf(i)
        if lp <= cutoff:
            total += math.exp(lp - log_obs)
    # total >= 1 (the observed outcome always qualifies); summing relative
    # to the observed pmf keeps deep-tail p-values out of the underflow zone.
    return min(1.0, math.exp(log_obs + math.log(total)))
