"""Laws for the site recovery rate xi, supported on [1, inf).

Four families are available:

========== ============================ ==============================
family      parameters                   law
========== ============================ ==============================
point       a >= 1                       xi = a
two_point   1 <= a < b, 0 < w < 1        xi = a w.p. w, b w.p. 1 - w
pareto_min1 alpha > 0                    density alpha u^(-alpha-1), u>=1
shifted_exp beta > 0                     xi = 1 + Exp(beta)
========== ============================ ==============================

The moment functionals ``E[1/xi]`` and ``E[1/(xi + s)]`` fix the critical
infection rate and the per-step cascade factor of the supercritical bound.
"""

from dataclasses import dataclass
import math

import numpy as np

from scipy import integrate

from .errors import ConfigurationError

FAMILIES = ("point", "two_point", "pareto_min1", "shifted_exp")
QUAD_TOL = 1e-10


@dataclass(frozen=True)
class RecoverySpec:
    family: str
    params: tuple

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(v) for v in self.params))
        _validate(self.family, self.params)

    @classmethod
    def point(cls, a=1.0):
        return cls("point", (a,))

    @classmethod
    def two_point(cls, a, b, w):
        return cls("two_point", (a, b, w))

    @classmethod
    def pareto(cls, alpha):
        return cls("pareto_min1", (alpha,))

    @classmethod
    def shifted_exp(cls, beta):
        return cls("shifted_exp", (beta,))

    def quantile(self, u):
        """Inverse CDF at ``u`` in (0, 1)."""
        fam, par = self.family, self.params
        if fam == "point":
            return par[0]
        if fam == "two_point":
            a, b, w = par
            return a if u < w else b
        if fam == "pareto_min1":
            return (1.0 - u) ** (-1.0 / par[0])
        return 1.0 - math.log1p(-u) / par[0]

    def quantile_array(self, u):
        """Vectorised ``quantile`` over a numpy array of uniforms."""
        fam, par = self.family, self.params
        if fam == "point":
            return np.full(np.shape(u), par[0])
        if fam == "two_point":
            a, b, w = par
            return np.where(u < w, a, b)
        if fam == "pareto_min1":
            return (1.0 - u) ** (-1.0 / par[0])
        return 1.0 - np.log1p(-u) / par[0]

    def sample(self, rng):
        """One draw using the caller's ``random.Random`` stream."""
        if self.family == "point":
            return self.params[0]
        return self.quantile(rng.random())

    def density(self, u):
        fam, par = self.family, self.params
        if fam == "pareto_min1":
            alpha = par[0]
            return alpha * u ** (-alpha - 1.0) if u >= 1.0 else 0.0
        if fam == "shifted_exp":
            beta = par[0]
            return beta * math.exp(-beta * (u - 1.0)) if u >= 1.0 else 0.0
        raise ValueError("%s has no density" % fam)

    def __str__(self):
        return format_spec(self)


def _validate(family, params):
    if family not in FAMILIES:
        raise ConfigurationError("unknown recovery family %r" % family)
    n_expected = {"point": 1, "two_point": 3, "pareto_min1": 1, "shifted_exp": 1}[family]
    if len(params) != n_expected:
        raise ConfigurationError(
            "%s takes %d parameter(s), got %d" % (family, n_expected, len(params))
        )
    if any(not math.isfinite(v) for v in params):
        raise ConfigurationError("non-finite parameter in %s%r" % (family, params))
    if family == "point" and params[0] < 1.0:
        raise ConfigurationError("point mass must sit at a >= 1")
    if family == "two_point":
        a, b, w = params
        if not (1.0 <= a < b):
            raise ConfigurationError("two_point needs 1 <= a < b")
        if not (0.0 < w < 1.0):
            raise ConfigurationError("two_point weight must lie in (0, 1)")
    if family in ("pareto_min1", "shifted_exp") and params[0] <= 0.0:
        raise ConfigurationError("%s parameter must be positive" % family)


_GRAMMAR = {
    "point": "point",
    "twopoint": "two_point",
    "pareto": "pareto_min1",
    "shiftedexp": "shifted_exp",
}


def parse_spec(text):
    """Parse ``point:a``, ``twopoint:a,b,w``, ``pareto:alpha`` or ``shiftedexp:beta``."""
    if isinstance(text, RecoverySpec):
        return text
    name, sep, rest = text.strip().partition(":")
    if not sep or name.lower() not in _GRAMMAR:
        raise ConfigurationError("bad recovery spec %r" % text)
    try:
        params = tuple(float(v) for v in rest.split(","))
    except ValueError:
        raise ConfigurationError("bad recovery parameters in %r" % text) from None
    return RecoverySpec(_GRAMMAR[name.lower()], params)


def format_spec(spec):
    short = {v: k for k, v in _GRAMMAR.items()}[spec.family]
    return "%s:%s" % (short, ",".join("%r" % v for v in spec.params))


def _quad_mean(spec, func):
    val, _err = integrate.quad(
        lambda u: func(u) * spec.density(u), 1.0, math.inf, epsabs=QUAD_TOL, epsrel=0.0, limit=200
    )
    return val


def mean_inverse_quad(spec, s=0.0):
    """E[1/(xi + s)] by adaptive quadrature (discrete laws summed exactly)."""
    fam, par = spec.family, spec.params
    if fam == "point":
        return 1.0 / (par[0] + s)
    if fam == "two_point":
        a, b, w = par
        return w / (a + s) + (1.0 - w) / (b + s)
    return _quad_mean(spec, lambda u: 1.0 / (u + s))


def mean_inverse(spec):
    """E[1/xi]; always in (0, 1] since xi >= 1."""
    fam, par = spec.family, spec.params
    if fam == "pareto_min1":
        alpha = par[0]
        return alpha / (alpha + 1.0)
    return mean_inverse_shifted(spec, 0.0)


def mean_inverse_shifted(spec, s):
    """E[1/(xi + s)] for s >= 0."""
    if s < 0:
        raise ValueError("shift must be nonnegative, got %r" % s)
    if spec.family == "pareto_min1" and s == 0:
        return mean_inverse(spec)
    return mean_inverse_quad(spec, s)


def lambda_c(spec, p):
    """Critical infection rate 1 / (p E[1/xi])."""
    if not (0.0 < p <= 1.0):
        raise ConfigurationError("edge probability must lie in (0, 1], got %r" % p)
    return 1.0 / (p * mean_inverse(spec))


def q_value(spec, p, lam, d):
    """Per-step cascade factor (lam p / 2d) E[1/(xi + lam/2d)]."""
    if not (0.0 < p <= 1.0):
        raise ConfigurationError("edge probability must lie in (0, 1], got %r" % p)
    if lam <= 0:
        raise ConfigurationError("infection rate must be positive")
    if d < 1:
        raise ConfigurationError("dimension must be >= 1")
    a = lam / (2.0 * d)
    return a * p * mean_inverse_shifted(spec, a)
