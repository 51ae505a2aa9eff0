"""Sites of Z^d and a lazily sampled quenched environment.

Sites are plain tuples of ints; equality and hashing are coordinate-wise.
An edge is keyed by its canonical ``(min, max)`` pair of endpoints.
"""

import threading

from . import rng
from .errors import ConfigurationError
from .recovery import RecoverySpec, parse_spec


def origin(d):
    return (0,) * d


def check_site(x, d):
    if len(x) != d:
        raise ValueError("site %r does not have dimension %d" % (x, d))


def neighbors(x, d):
    """The 2d lattice neighbours of ``x``: axis ascending, minus before plus."""
    check_site(x, d)
    out = []
    for i in range(d):
        xi = x[i]
        out.append(x[:i] + (xi - 1,) + x[i + 1:])
        out.append(x[:i] + (xi + 1,) + x[i + 1:])
    return out


def adjacent(x, y):
    if len(x) != len(y):
        return False
    diff = 0
    for a, b in zip(x, y):
        if a != b:
            if abs(a - b) != 1:
                return False
            diff += 1
    return diff == 1


def canonical_edge(x, y):
    if not adjacent(x, y):
        raise ValueError("%r and %r are not lattice neighbours" % (x, y))
    return (x, y) if x < y else (y, x)


def _edge_parts(x, y):
    """Integer key of the edge {x, y} (assumed adjacent): lower endpoint and axis."""
    lo = x if x < y else y
    hi = y if lo is x else x
    for axis in range(len(x)):
        if lo[axis] != hi[axis]:
            return lo + (axis,)
    raise ValueError("degenerate edge")


class Environment:
    """One quenched realisation of open edges and recovery rates on Z^d.

    Values are sampled on first access from a keyed pseudorandom function of
    ``(seed, canonical key)`` and memoised, so two instances built with the
    same arguments agree on every query regardless of query order.  An edge
    is open iff its uniform falls below ``p``, which couples environments at
    different ``p`` monotonically.
    """

    def __init__(self, d, p, recovery="point:1", seed=0):
        if d < 1:
            raise ConfigurationError("dimension must be >= 1")
        if not (0.0 <= p <= 1.0):
            raise ConfigurationError("edge probability must lie in [0, 1]")
        self.d = int(d)
        self.p = float(p)
        self.recovery = parse_spec(recovery) if not isinstance(recovery, RecoverySpec) else recovery
        self.seed = int(seed) & ((1 << 64) - 1)
        self._edge_u = {}
        self._rates = {}
        self._open_nbrs = {}
        self._lock = threading.Lock()

    def __repr__(self):
        return "Environment(d=%d, p=%r, recovery=%r, seed=%d)" % (
            self.d, self.p, str(self.recovery), self.seed)

    def edge_uniform(self, x, y):
        key = _edge_parts(x, y)
        u = self._edge_u.get(key)
        if u is None:
            u = rng.keyed_uniform(self.seed, rng.EDGE, *key)
            with self._lock:
                self._edge_u[key] = u
        return u

    def edge_open(self, x, y):
        check_site(x, self.d)
        check_site(y, self.d)
        if not adjacent(x, y):
            raise ValueError("%r and %r are not lattice neighbours" % (x, y))
        return self.edge_uniform(x, y) < self.p

    def open_neighbors(self, x):
        """The random neighbourhood of ``x`` as a tuple in ``neighbors`` order."""
        nb = self._open_nbrs.get(x)
        if nb is None:
            p = self.p
            nb = tuple(y for y in neighbors(x, self.d) if self.edge_uniform(x, y) < p)
            with self._lock:
                self._open_nbrs[x] = nb
        return nb

    def site_rate(self, x):
        r = self._rates.get(x)
        if r is None:
            check_site(x, self.d)
            u = rng.keyed_uniform(self.seed, rng.SITE, *x)
            r = self.recovery.quantile(u)
            with self._lock:
                self._rates[x] = r
        return r

    @property
    def n_materialized(self):
        return len(self._rates), len(self._edge_u)


class GraphEnvironment:
    """A finite environment: only the listed sites exist and only listed edges are open.

    Exposes the same interface the simulation engines use on ``Environment``.
    """

    def __init__(self, d, sites, open_edges, rates):
        self.d = int(d)
        self.sites = [tuple(s) for s in sites]
        index = set(self.sites)
        nbrs = {s: [] for s in self.sites}
        for x, y in open_edges:
            x, y = tuple(x), tuple(y)
            if x not in index or y not in index:
                raise ConfigurationError("edge %r-%r leaves the site list" % (x, y))
            if not adjacent(x, y):
                raise ConfigurationError("%r and %r are not lattice neighbours" % (x, y))
            if y not in nbrs[x]:
                nbrs[x].append(y)
                nbrs[y].append(x)
        # deterministic neighbour order, matching lattice ordering
        self._open_nbrs = {
            s: tuple(sorted(v, key=lambda y, s=s: neighbors(s, self.d).index(y)))
            for s, v in nbrs.items()
        }
        self._rates = {tuple(s): float(r) for s, r in zip(self.sites, rates)}

    def open_neighbors(self, x):
        return self._open_nbrs.get(x, ())

    def edge_open(self, x, y):
        if not adjacent(x, y):
            raise ValueError("%r and %r are not lattice neighbours" % (x, y))
        return y in self._open_nbrs.get(x, ())

    def site_rate(self, x):
        return self._rates[x]
