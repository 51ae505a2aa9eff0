"""Constant-free pieces of the subcritical extinction estimate.

Logarithms are natural throughout.  Terms that grow like ``(2d)^n`` or
``n!`` are handled in log space.
"""

from dataclasses import dataclass, fields
import math

import numpy as np

from .errors import ConfigurationError
from .recovery import lambda_c, mean_inverse, parse_spec, format_spec

SERIES_TOL = 1e-12


class BoundNotApplicable(ValueError):
    """The requested bound has no valid parameter choice here."""


def _log_pmf(mu, k):
    if mu == 0:
        return 0.0 if k == 0 else -math.inf
    return -mu + k * math.log(mu) - math.lgamma(k + 1)


def poisson_tail_exact(mu, n):
    """P(Poisson(mu) >= n), summing whichever side of the mode is smaller."""
    if mu < 0 or n < 0:
        raise ValueError("need mu >= 0 and n >= 0")
    if n == 0:
        return 1.0
    if mu == 0:
        return 0.0
    if n <= mu:
        lower = math.fsum(math.exp(_log_pmf(mu, k)) for k in range(n))
        return max(0.0, 1.0 - lower)
    terms = []
    k = n
    while True:
        term = math.exp(_log_pmf(mu, k))
        terms.append(term)
        if term < 1e-18 * terms[0] or term == 0.0:
            break
        k += 1
    return min(1.0, math.fsum(terms))


def poisson_cdf(mu, n):
    """P(Poisson(mu) <= n)."""
    if n < 0:
        return 0.0
    if n < mu:
        return math.fsum(math.exp(_log_pmf(mu, k)) for k in range(n + 1))
    return 1.0 - poisson_tail_exact(mu, n + 1)


def poisson_tail_chernoff(lam, t, d, n):
    """Chernoff bound on P(N(t) >= n) for N of rate lam/(2d).

    With ``theta = log(2dn / (lam t))`` the exponential-moment bound becomes
    ``e^n e^{-lam t/(2d)} (lam t)^n / (2dn)^n``.  Needs ``theta > 0``.
    """
    if n < 1 or lam * t <= 0 or 2 * d * n <= lam * t:
        raise BoundNotApplicable(
            "Chernoff choice theta = log(2dn/(lam t)) needs n >= 1 and 2dn > lam t > 0")
    log_val = n - lam * t / (2.0 * d) + n * math.log(lam * t) - n * math.log(2.0 * d * n)
    return math.exp(log_val)


def path_count_bounds(d, n):
    """Upper bounds on the number of non-self-avoiding and self-avoiding n-step paths.

    Returns ``(C(n+1, 2) (2d)^(n-1), (2d)^n)``, the first taken as 0 for
    ``n < 2`` where every path is self-avoiding.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    repeat = math.comb(n + 1, 2) * (2 * d) ** (n - 1) if n >= 2 else 0
    return repeat, (2 * d) ** n


@dataclass
class BoundReport:
    d: int
    lam: float
    p: float
    spec: str
    t: float
    cutoff: int
    term_small_n: float
    term_geometric: float
    poisson_small_n_bound: float
    dominant_total: float
    exact_series: float
    exact_series_terms: int
    small_n_applicable: bool

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def as_row(self):
        return [getattr(self, c) for c in self.columns()]


def subcritical_series_bound(d, lam, p, spec):
    """Evaluate the subcritical series at ``t = log(d) / (2 lam)``.

    With ``rho = lam p E[1/xi] < 1`` and cutoff ``n* = floor(log(d) / (4 lam))``
    the dominant total is ``n* (2/e)^(t/2) + rho^n* / (1 - rho)``.  The sharper
    series ``sum_n rho^n P(alpha(t) <= n + 1)`` with a rate-one Poisson
    ``alpha`` is evaluated too, truncated once the geometric envelope of the
    remainder is below ``SERIES_TOL``.
    """
    spec = parse_spec(spec)
    if d < 2:
        raise ConfigurationError("need d >= 2 so that log d > 0")
    if lam <= 0:
        raise ConfigurationError("infection rate must be positive")
    if lam >= lambda_c(spec, p):
        raise ConfigurationError(
            "lambda=%g is not below lambda_c=%g; the series diverges" % (lam, lambda_c(spec, p)))
    rho = lam * p * mean_inverse(spec)
    logd = math.log(d)
    t = logd / (2.0 * lam)
    cutoff = math.floor(logd / (4.0 * lam))
    chernoff = math.exp((t / 2.0) * math.log(2.0 / math.e))
    term_small = cutoff * chernoff
    term_geo = math.exp(cutoff * math.log(rho)) / (1.0 - rho)

    terms = []
    n = 0
    while True:
        terms.append(math.exp(n * math.log(rho)) * poisson_cdf(t, n + 1))
        n += 1
        if math.exp(n * math.log(rho)) / (1.0 - rho) < SERIES_TOL:
            break
    return BoundReport(
        d=d, lam=lam, p=p, spec=format_spec(spec), t=t, cutoff=cutoff,
        term_small_n=term_small, term_geometric=term_geo,
        poisson_small_n_bound=chernoff, dominant_total=term_small + term_geo,
        exact_series=math.fsum(terms), exact_series_terms=n,
        # every small-n index obeys n + 1 <= cutoff <= t/2
        small_n_applicable=cutoff <= t / 2.0,
    )


@dataclass
class Rate1Check:
    n: int
    t: float
    lhs: float
    lhs_se: float
    middle: float
    middle_se: float
    rhs: float
    holds: bool


def rate1_domination_check(spec, n, t, replicates, seed=0, z=3.0, chunk=500_000):
    """Compare the typed-path time event against its rate-one Poisson bound.

    LHS is ``P(S_0 + ... + S_{n-1} <= t, S_n >= t - sum)`` and the middle term
    ``P(S_0 + ... + S_n >= t)``, with independent ``S_m ~ Exp(xi_m)`` and
    ``xi_m`` drawn from ``spec``; both by Monte Carlo.  RHS is the exact
    ``P(alpha(t) <= n + 1)``.  ``holds`` allows ``z`` standard errors.
    """
    spec = parse_spec(spec)
    if t == 0:
        return Rate1Check(n, t, 1.0, 0.0, 1.0, 0.0, 1.0, True)
    gen = np.random.default_rng(seed)
    lhs_hits = mid_hits = 0
    done = 0
    while done < replicates:
        size = min(chunk, replicates - done)
        done += size
        xi = spec.quantile_array(gen.random((size, n + 1)))
        s = gen.exponential(1.0, (size, n + 1)) / xi
        head = s[:, :n].sum(axis=1)
        lhs_hits += int(np.count_nonzero((head <= t) & (s[:, n] >= t - head)))
        mid_hits += int(np.count_nonzero(head + s[:, n] >= t))
    lhs = lhs_hits / replicates
    mid = mid_hits / replicates
    lhs_se = math.sqrt(lhs * (1 - lhs) / replicates)
    mid_se = math.sqrt(mid * (1 - mid) / replicates)
    rhs = poisson_cdf(t, n + 1)
    holds = lhs <= rhs + z * lhs_se and mid <= rhs + z * mid_se
    return Rate1Check(n, t, lhs, lhs_se, mid, mid_se, rhs, holds)
