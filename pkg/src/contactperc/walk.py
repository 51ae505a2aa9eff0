"""Two-regime lattice walk, intersection statistics and second-moment bounds.

The walk moves along the last ``floor(d/N)`` ("special") axes, always in the
positive direction, on every step ``j`` with ``N | j + 1``; on the other
steps it moves like a simple random walk on the remaining axes.  The sum of
special coordinates therefore grows by exactly one every ``N`` steps, which
forces transience and restricts when two walks can meet.
"""

from dataclasses import dataclass, field
from fractions import Fraction
import math

import numpy as np

from .errors import ConfigurationError
from .recovery import parse_spec, q_value
from .simulate import typed_path_event_prob_mc


def n_of_d(d):
    """Block length ``floor(log d / (2 log log d))`` (natural logs)."""
    if d < 3:
        raise ConfigurationError("block length needs d >= 3 so that log log d > 0")
    return math.floor(math.log(d) / (2.0 * math.log(math.log(d))))


@dataclass(frozen=True)
class WalkParams:
    d: int
    N: int = None
    overridden: bool = False

    def __post_init__(self):
        if self.N is None:
            object.__setattr__(self, "N", n_of_d(self.d))
        else:
            object.__setattr__(self, "overridden", True)
        if self.N < 1:
            raise ConfigurationError("block length N must be >= 1 (d=%d gives %d)" % (self.d, self.N))
        if self.special_count < 1:
            raise ConfigurationError("floor(d/N) = 0 for d=%d, N=%d" % (self.d, self.N))
        if self.N > 1 and self.nonspecial_count < 1:
            raise ConfigurationError("no non-special axes left for d=%d, N=%d" % (self.d, self.N))

    @property
    def special_count(self):
        return self.d // self.N

    @property
    def nonspecial_count(self):
        return self.d - self.special_count

    @property
    def special_axes(self):
        return range(self.nonspecial_count, self.d)

    def sigma(self, x):
        """Sum of the special coordinates of a site or of an array of sites."""
        x = np.asarray(x)
        return x[..., self.nonspecial_count:].sum(axis=-1)

    def is_special_step(self, j):
        return (j + 1) % self.N == 0


def walk_step_law(params, j):
    """Distribution of the increment ``S_{j+1} - S_j`` as ``{(axis, sign): prob}``."""
    if j < 0:
        raise ValueError("step index must be >= 0")
    if params.is_special_step(j):
        w = Fraction(1, params.special_count)
        return {(k, +1): w for k in params.special_axes}
    w = Fraction(1, 2 * params.nonspecial_count)
    law = {}
    for k in range(params.nonspecial_count):
        law[(k, -1)] = w
        law[(k, +1)] = w
    return law


def fk_count(params, k):
    """Number of admissible k-block paths from a fixed start."""
    N = params.N
    return (2 * params.nonspecial_count) ** ((N - 1) * k) * params.special_count ** (k - 1)


def sample_walks(params, start, n_steps, size, gen):
    """``size`` independent walks of ``n_steps`` steps; array (size, n_steps+1, d)."""
    start = np.asarray(start, dtype=np.int64)
    if start.shape != (params.d,):
        raise ValueError("start must have dimension %d" % params.d)
    paths = np.empty((size, n_steps + 1, params.d), dtype=np.int64)
    paths[:, 0] = start
    rows = np.arange(size)
    for j in range(n_steps):
        cur = paths[:, j].copy()
        if params.is_special_step(j):
            axis = params.nonspecial_count + gen.integers(0, params.special_count, size)
            cur[rows, axis] += 1
        else:
            axis = gen.integers(0, params.nonspecial_count, size)
            cur[rows, axis] += 2 * gen.integers(0, 2, size) - 1
        paths[:, j + 1] = cur
    return paths


def _coincidences(S, T):
    """Boolean array (size, m, m') with entry [r, i, j] = (S_i == T_j) in replicate r."""
    return (S[:, :, None, :] == T[:, None, :, :]).all(axis=-1)


def intersection_L(S, T):
    """``L = sum_u min(#visits of S to u, #visits of T to u)`` per replicate."""
    same_s = _coincidences(S, S).sum(axis=2)       # visits of S to S_i
    cross = _coincidences(S, T).sum(axis=2)        # visits of T to S_i
    share = np.minimum(same_s, cross) / same_s
    return np.rint(share.sum(axis=1)).astype(np.int64)


def collision_hits(S, T):
    """Whether the two walks share any site (all index pairs compared)."""
    return _coincidences(S, T).any(axis=(1, 2))


def collision_hits_pruned(params, S, T):
    """Same as :func:`collision_hits` but only compares index pairs allowed by sigma.

    ``S_i = T_j`` forces ``floor(j/N) = sigma(S_0) - sigma(T_0) + floor(i/N)``,
    so for each ``i`` only ``N`` consecutive ``j`` can match.
    """
    N = params.N
    m = T.shape[1]
    offset = params.sigma(S[:, 0]) - params.sigma(T[:, 0])
    hits = np.zeros(S.shape[0], dtype=bool)
    for shift in np.unique(offset):
        rows = offset == shift
        Sr, Tr = S[rows], T[rows]
        hit = np.zeros(Sr.shape[0], dtype=bool)
        for i in range(S.shape[1]):
            lo = N * (int(shift) + i // N)
            hi = min(lo + N, m)
            lo = max(lo, 0)
            if lo >= hi:
                continue
            hit |= (Sr[:, i, None, :] == Tr[:, lo:hi, :]).all(axis=-1).any(axis=1)
        hits[rows] = hit
    return hits


@dataclass
class WalkPair:
    start_x: tuple
    start_y: tuple
    steps: int
    path_S: np.ndarray
    path_Shat: np.ndarray
    L: int


def sample_walk_pair(params, x, y, k, gen):
    """Two independent walks of ``kN - 1`` steps from ``x`` and ``y`` with their L."""
    if k < 1:
        raise ValueError("k must be >= 1")
    steps = k * params.N - 1
    S = sample_walks(params, x, steps, 1, gen)
    T = sample_walks(params, y, steps, 1, gen)
    return WalkPair(tuple(x), tuple(y), steps, S[0], T[0], int(intersection_L(S, T)[0]))


def collision_prob(params, x, y, k, replicates, seed=0, chunk=20_000):
    """Monte Carlo P(two walks from x and y meet within kN - 1 steps), with s.e."""
    if replicates < 1:
        raise ValueError("need at least one replicate")
    gen = np.random.default_rng(seed)
    steps = k * params.N - 1
    hits = 0
    done = 0
    while done < replicates:
        size = min(chunk, replicates - done)
        done += size
        S = sample_walks(params, x, steps, size, gen)
        T = sample_walks(params, y, steps, size, gen)
        hits += int(collision_hits_pruned(params, S, T).sum())
    est = hits / replicates
    return est, math.sqrt(est * (1 - est) / replicates)


@dataclass
class PairEstimate:
    x: tuple
    y: tuple
    mean: float
    var: float
    no_collision_mass: float
    collision_term: float
    min_value: float
    heavy_tail: bool


@dataclass
class SecondMomentBound:
    bound: float
    bound_se: float
    denominator: float
    denominator_se: float
    q: float
    k: int
    N: int
    pairs: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def _heavy_tail(values, top=0.01, share=0.5):
    total = values.sum()
    if total <= 0 or values.size < 100:
        return False
    n_top = max(1, int(math.ceil(top * values.size)))
    return np.partition(values, values.size - n_top)[-n_top:].sum() > share * total


def lemma42_bound(params, A, lam, p, spec, k, replicates, seed=0, chunk=20_000):
    """Second-moment survival lower bound ``1 / (|A|^-2 sum_{x,y} E_{x,y} (1/q)^L_k)``.

    Each ordered pair of starting sites gets ``replicates`` independent walk
    pairs.  Every pair estimate is split into the mass of samples that never
    meet (where ``(1/q)^0 = 1``) and the contribution of samples that do,
    and flagged when the top 1% of samples carry more than half the sum.
    """
    spec = parse_spec(spec)
    A = [tuple(a) for a in A]
    if not A:
        raise ValueError("need a nonempty set of starting sites")
    q = q_value(spec, p, lam, params.d)
    if not (0.0 < q < 1.0):
        raise ConfigurationError("q = %g is outside (0, 1)" % q)
    inv_q = 1.0 / q
    gen = np.random.default_rng(seed)
    steps = k * params.N - 1
    pairs = []
    for x in A:
        for y in A:
            vals = []
            done = 0
            while done < replicates:
                size = min(chunk, replicates - done)
                done += size
                S = sample_walks(params, x, steps, size, gen)
                T = sample_walks(params, y, steps, size, gen)
                vals.append(np.power(inv_q, intersection_L(S, T)))
            v = np.concatenate(vals)
            met = v > 1.0
            pairs.append(PairEstimate(
                x, y, float(v.mean()), float(v.var(ddof=1)) if v.size > 1 else 0.0,
                float((~met).mean()), float((v * met).mean()), float(v.min()), _heavy_tail(v)))
    n2 = len(A) ** 2
    denom = math.fsum(pe.mean for pe in pairs) / n2
    denom_se = math.sqrt(math.fsum(pe.var / replicates for pe in pairs)) / n2
    bound = 1.0 / denom
    warnings = []
    if any(pe.heavy_tail for pe in pairs):
        warnings.append("heavy_tail")
    if params.overridden:
        warnings.append("N_override=%d" % params.N)
    return SecondMomentBound(bound, denom_se / denom ** 2, denom, denom_se, q, k, params.N,
                             pairs, warnings)


def union_lower_bound_check(weights, events):
    """Both sides of ``P(union A_i) >= n^2 / sum_ij P(A_i A_j) / (P(A_i) P(A_j))``.

    ``weights`` are atom probabilities (normalised here) and ``events`` are
    collections of atom indices.  Exact with ``Fraction`` or int weights.
    Returns ``(lhs, rhs, holds)``.
    """
    total = sum(weights)
    if total <= 0:
        raise ValueError("atom weights must have positive total")
    exact = all(isinstance(w, (int, Fraction)) for w in weights)
    w = [Fraction(v) / Fraction(total) for v in weights] if exact else [v / total for v in weights]
    sets = [frozenset(e) for e in events]
    if not sets:
        raise ValueError("need at least one event")

    def prob(s):
        return sum((w[i] for i in s), Fraction(0) if exact else 0.0)

    marg = [prob(s) for s in sets]
    if any(m <= 0 for m in marg):
        raise ValueError("every event needs positive probability")
    lhs = prob(frozenset().union(*sets))
    n = len(sets)
    ratio = sum(prob(si & sj) / (mi * mj)
                for si, mi in zip(sets, marg) for sj, mj in zip(sets, marg))
    rhs = n * n / ratio if not exact else Fraction(n * n) / ratio
    holds = lhs >= rhs if exact else lhs >= rhs * (1.0 - 1e-12)
    return lhs, rhs, holds


def annealed_Ik_prob(d, lam, p, spec, m):
    """Annealed probability ``q^m`` that a fixed self-avoiding m-step path cascades."""
    if m < 0:
        raise ValueError("path length must be >= 0")
    return q_value(parse_spec(spec), p, lam, d) ** m


def ik_event_prob_mc(d, lam, p, spec, m, replicates, seed=0):
    """Monte Carlo of the first-arrow cascade along a straight m-step path.

    The horizon is ten times the mean time of a cascade in which each step
    waits for an arrow that beats a rate-one recovery, so truncation bias is
    of order ``e^-10`` per step.
    """
    a = lam / (2.0 * d)
    horizon = 10.0 * max(m, 1) / (a + 1.0)
    path = [(i,) + (0,) * (d - 1) for i in range(m + 1)]
    return typed_path_event_prob_mc(
        path, [1] * m, horizon, lam=lam, d=d, p=p, recovery=spec,
        replicates=replicates, seed=seed, require_alive_at_t=False)
