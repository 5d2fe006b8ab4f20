"""Central and noncentral chi-squared tail probabilities.

The central tail is the regularized upper incomplete gamma function
``Q(df/2, x/2)``, evaluated by its power series when ``x < a + 1`` and by a
Lentz continued fraction otherwise.
"""
from __future__ import annotations

import math

from .errors import DomainError

_EPS = 1e-16
_TINY = 1e-300
_MAXIT = 10_000


def _gamma_p_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAXIT):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_cf(a: float, x: float) -> float:
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAXIT):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma ``Gamma(a, x) / Gamma(a)``."""
    if x <= 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_p_series(a, x)
    return _gamma_q_cf(a, x)


def gamma_p(a: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x < a + 1.0:
        return _gamma_p_series(a, x)
    return 1.0 - _gamma_q_cf(a, x)


def _check_df(df):
    if not (df > 0) or int(df) != df:
        raise DomainError(f"df must be a positive integer, got {df!r}")


def chi2_sf(x: float, df: int) -> float:
    """Upper tail ``P(X > x)`` of the central chi-squared law."""
    _check_df(df)
    if not x >= 0.0:
        raise DomainError(f"x must be >= 0, got {x!r}")
    if math.isinf(x):
        return 0.0
    return gamma_q(0.5 * df, 0.5 * x)


def chi2_cdf(x: float, df: int) -> float:
    _check_df(df)
    if not x >= 0.0:
        raise DomainError(f"x must be >= 0, got {x!r}")
    return gamma_p(0.5 * df, 0.5 * x)


def _chi2_logpdf(x: float, df: int) -> float:
    a = 0.5 * df
    return (a - 1.0) * math.log(x) - 0.5 * x - a * math.log(2.0) - math.lgamma(a)


def chi2_quantile(prob: float, df: int) -> float:
    """Inverse of the chi-squared cdf: ``chi2_sf(result, df) == 1 - prob``.

    Bracketing bisection followed by a few Newton steps on the cdf.
    """
    _check_df(df)
    if not 0.0 < prob < 1.0:
        raise DomainError(f"prob must lie in (0, 1), got {prob!r}")
    lo, hi = 0.0, max(1.0, float(df))
    while chi2_cdf(hi, df) < prob:
        lo, hi = hi, 2.0 * hi
    # relative width, so quantiles near zero keep their significant digits
    for _ in range(2200):
        mid = 0.5 * (lo + hi)
        if chi2_cdf(mid, df) < prob:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * hi:
            break
    x = 0.5 * (lo + hi)
    for _ in range(5):
        if x <= 0.0:
            break
        dens = math.exp(_chi2_logpdf(x, df))
        if dens <= 0.0 or not math.isfinite(dens):
            break
        # the lower tail is only accurate to absolute 1e-16; Newton on whichever
        # tail is smaller keeps relative accuracy for extreme probabilities
        if prob > 0.5:
            step = (chi2_sf(x, df) - (1.0 - prob)) / dens
        else:
            step = -(chi2_cdf(x, df) - prob) / dens
        nx = x + step
        if not lo <= nx <= hi:
            break
        x = nx
        if abs(step) <= 1e-15 * x:
            break
    return x


def noncentral_chi2_sf(x: float, df: int, ncp: float, tail_mass: float = 1e-12) -> float:
    """Upper tail of the noncentral chi-squared law as a Poisson mixture.

    Sums ``Pois(k; ncp/2) * chi2_sf(x, df + 2k)`` outward from the Poisson
    mode until the neglected Poisson mass is below ``tail_mass``.
    """
    _check_df(df)
    if not x >= 0.0:
        raise DomainError(f"x must be >= 0, got {x!r}")
    if not (ncp >= 0.0 and math.isfinite(ncp)):
        raise DomainError(f"ncp must be finite and >= 0, got {ncp!r}")
    lam = 0.5 * ncp
    if lam == 0.0:
        return chi2_sf(x, df)
    mode = int(lam)

    def weight(k):
        return math.exp(-lam + k * math.log(lam) - math.lgamma(k + 1.0))

    total = 0.0
    mass = 0.0
    k = mode
    while k >= 0:
        w = weight(k)
        total += w * chi2_sf(x, df + 2 * k)
        mass += w
        if w < tail_mass * 1e-3 and k < mode:
            break
        k -= 1
    k = mode + 1
    while 1.0 - mass > tail_mass:
        w = weight(k)
        if w == 0.0 and k > lam:
            break
        total += w * chi2_sf(x, df + 2 * k)
        mass += w
        k += 1
    return min(1.0, max(0.0, total))


def power(df: int, ncp: float, alpha: float = 0.05) -> float:
    """Asymptotic power of a level-``alpha`` chi-squared test with noncentrality ``ncp``."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    return noncentral_chi2_sf(chi2_quantile(1.0 - alpha, df), df, ncp)
