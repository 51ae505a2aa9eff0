"""Exact answers for the contact process on a handful of sites.

States are subsets of the listed sites, encoded as bitmasks (bit ``i`` set
when ``sites[i]`` is infected).  State 0 is the absorbing empty set.
"""

from dataclasses import dataclass, field
import json
from pathlib import Path

import numpy as np
from scipy import stats
from scipy.integrate import solve_ivp

from .errors import ConfigurationError
from .lattice import GraphEnvironment, adjacent

MAX_SITES = 12
UNIFORMIZATION_TOL = 1e-10


@dataclass
class FiniteInstance:
    sites: list
    open_edges: list
    rates: list
    lam: float
    d: int
    name: str = ""
    initial: list = field(default_factory=list)
    T: float = 1.0

    def __post_init__(self):
        self.sites = [tuple(int(c) for c in s) for s in self.sites]
        self.open_edges = [(tuple(a), tuple(b)) for a, b in self.open_edges]
        self.rates = [float(r) for r in self.rates]
        self.initial = [tuple(s) for s in self.initial]
        n = len(self.sites)
        if n > MAX_SITES:
            raise ConfigurationError(
                "state space 2^%d exceeds the %d-site cap" % (n, MAX_SITES))
        if len(set(self.sites)) != n:
            raise ConfigurationError("duplicate sites in instance")
        if len(self.rates) != n:
            raise ConfigurationError("need one recovery rate per site")
        if any(r <= 0 for r in self.rates):
            raise ConfigurationError("recovery rates must be positive")
        if any(len(s) != self.d for s in self.sites):
            raise ConfigurationError("site dimension differs from d=%d" % self.d)
        index = set(self.sites)
        for a, b in self.open_edges:
            if a not in index or b not in index:
                raise ConfigurationError("edge %r-%r leaves the site list" % (a, b))
            if not adjacent(a, b):
                raise ConfigurationError("%r and %r are not lattice neighbours" % (a, b))

    @property
    def n(self):
        return len(self.sites)

    def adjacency(self):
        idx = {s: i for i, s in enumerate(self.sites)}
        adj = np.zeros((self.n, self.n), dtype=bool)
        for a, b in self.open_edges:
            adj[idx[a], idx[b]] = adj[idx[b], idx[a]] = True
        return adj

    def mask(self, subset):
        idx = {s: i for i, s in enumerate(self.sites)}
        m = 0
        for s in subset:
            m |= 1 << idx[tuple(s)]
        return m

    def environment(self):
        return GraphEnvironment(self.d, self.sites, self.open_edges, self.rates)

    def to_dict(self):
        return {
            "name": self.name,
            "d": self.d,
            "lambda": self.lam,
            "T": self.T,
            "sites": [list(s) for s in self.sites],
            "rates": self.rates,
            "open_edges": [[list(a), list(b)] for a, b in self.open_edges],
            "initial": [list(s) for s in self.initial],
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(
                sites=doc["sites"],
                open_edges=doc.get("open_edges", []),
                rates=doc["rates"],
                lam=float(doc["lambda"]),
                d=int(doc["d"]),
                name=doc.get("name", ""),
                initial=doc.get("initial", []),
                T=float(doc.get("T", 1.0)),
            )
        except KeyError as exc:
            raise ConfigurationError("instance is missing field %s" % exc) from None


def load_instance(path):
    path = Path(path)
    if not path.exists():
        raise ConfigurationError("instance file %s not found" % path)
    with open(path) as fh:
        doc = json.load(fh)
    inst = FiniteInstance.from_dict(doc)
    if not inst.name:
        inst.name = path.stem
    return inst


def save_instance(inst, path):
    doc = inst.to_dict()
    body = ",\n".join("  %s: %s" % (json.dumps(k), json.dumps(v)) for k, v in doc.items())
    with open(path, "w") as fh:
        fh.write("{\n%s\n}\n" % body)


def bundled_instances():
    folder = Path(__file__).with_name("instances")
    return [load_instance(p) for p in sorted(folder.glob("*.json"))]


def build_generator(inst):
    """Dense rate matrix over the 2^n subsets.

    ``S -> S \\ {x}`` at ``xi(x)`` for ``x in S``; ``S -> S + {y}`` at
    ``lam/(2d) * |N(y) & S|`` for ``y not in S``.
    """
    n = inst.n
    size = 1 << n
    a = inst.lam / (2.0 * inst.d)
    adj = inst.adjacency()
    nbr_mask = [sum(1 << j for j in range(n) if adj[i, j]) for i in range(n)]
    Q = np.zeros((size, size))
    for s in range(1, size):
        for i in range(n):
            bit = 1 << i
            if s & bit:
                Q[s, s ^ bit] += inst.rates[i]
            else:
                k = bin(nbr_mask[i] & s).count("1")
                if k:
                    Q[s, s | bit] += a * k
        Q[s, s] = -Q[s].sum()
    return Q


def expected_extinction_time(inst, initial, Q=None):
    """Mean absorption time from ``initial`` via the restricted linear system."""
    if Q is None:
        Q = build_generator(inst)
    m = inst.mask(initial)
    if m == 0:
        return 0.0
    sub = Q[1:, 1:]
    try:
        u = np.linalg.solve(sub, -np.ones(sub.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("singular restricted generator") from exc
    return float(u[m - 1])


def uniformization_steps(rate_t, tol=UNIFORMIZATION_TOL):
    """Smallest K with P(Poisson(rate_t) > K) < tol."""
    if rate_t == 0:
        return 0
    return int(stats.poisson.isf(tol / 2, rate_t)) + 1


def transient_distribution(inst, initial, T, Q=None, tol=UNIFORMIZATION_TOL):
    """Distribution at time ``T`` by uniformization.

    With ``Lam >= max exit rate`` and ``P = I + Q/Lam``,
    ``pi(T) = sum_k Pois(Lam T; k) pi(0) P^k``; the series is cut where the
    remaining Poisson mass drops below ``tol``.
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    if Q is None:
        Q = build_generator(inst)
    size = Q.shape[0]
    pi = np.zeros(size)
    pi[inst.mask(initial)] = 1.0
    lam_u = float(-Q.diagonal().min())
    if T == 0 or lam_u == 0:
        return pi
    P = np.eye(size) + Q / lam_u
    mu = lam_u * T
    K = uniformization_steps(mu, tol)
    weights = stats.poisson.pmf(np.arange(K + 1), mu)
    out = np.zeros(size)
    v = pi
    for k in range(K + 1):
        if weights[k] > 0:
            out += weights[k] * v
        v = v @ P
    return out


def extinction_prob_by(inst, initial, T, Q=None):
    """P(C_T is empty) from ``initial``."""
    if not initial:
        return 1.0
    return float(transient_distribution(inst, initial, T, Q)[0])


def transient_distribution_ode(inst, initial, T, Q=None, rtol=1e-12, atol=1e-14):
    """Second transient method: integrate the forward equation with DOP853."""
    if Q is None:
        Q = build_generator(inst)
    pi0 = np.zeros(Q.shape[0])
    pi0[inst.mask(initial)] = 1.0
    if T == 0:
        return pi0
    sol = solve_ivp(lambda _t, y: y @ Q, (0.0, T), pi0, method="DOP853", rtol=rtol, atol=atol)
    return sol.y[:, -1]


def path_instance(n_sites, lam, rates=None, name="", T=1.0):
    """Sites 0..n-1 on Z^1 with every consecutive edge open."""
    sites = [(i,) for i in range(n_sites)]
    edges = [((i,), (i + 1,)) for i in range(n_sites - 1)]
    rates = rates if rates is not None else [1.0] * n_sites
    return FiniteInstance(sites, edges, rates, lam, 1, name=name, initial=[(0,)], T=T)

