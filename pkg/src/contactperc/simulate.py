"""Event-driven simulation of the contact process with random recovery rates.

Two engines produce the same law:

``run_direct``
    Gillespie jump chain.  Each infected site ``x`` carries total rate
    ``xi(x) + lam/(2d) * |N(x)|``; on firing it either recovers or fires an
    infection attempt along a uniformly chosen open edge (a no-op when the
    target is already infected).

``run_graphical``
    Harris construction.  Recovery marks and directed infection arrows are
    Poisson processes stored in a :class:`Timeline`; the infected set at time
    ``t`` is the set of endpoints of infection paths.  Sharing one timeline
    across several initial sets gives the basic coupling.
"""

from bisect import bisect_right
from dataclasses import dataclass
import heapq
import math
import random

import numpy as np

from . import rng as keyed
from .lattice import adjacent
from .recovery import parse_spec

EXTINCT = "extinct"
ALIVE = "alive_at_horizon"
TRUNCATED = "truncated"


@dataclass(frozen=True)
class Limits:
    """Hard caps on one replicate.

    ``success_threshold`` (optional) stops a run once that many distinct
    sites have been infected; the run is then reported as truncated with
    reason ``"threshold"`` and may be counted as surviving.
    """

    max_ever_infected: int = 10**5
    max_events: int = 10**7
    success_threshold: int = None


@dataclass
class SimOutcome:
    verdict: str
    extinction_time: float = None
    max_infected: int = 0
    ever_infected: int = 0
    events_processed: int = 0
    truncation_reason: str = None
    final_time: float = 0.0
    final_infected: frozenset = frozenset()

    @property
    def survived(self):
        """Nonempty when the run stopped (horizon, threshold or cap)."""
        return self.verdict != EXTINCT

    @property
    def early_success(self):
        return self.truncation_reason == "threshold"


def _check_initial(initial, d):
    initial = list(dict.fromkeys(tuple(x) for x in initial))
    for x in initial:
        if len(x) != d:
            raise ValueError("initial site %r does not have dimension %d" % (x, d))
    return initial


def _as_stream(stream):
    if stream is None:
        return random.Random(0)
    if isinstance(stream, random.Random):
        return stream
    return random.Random(stream)


def run_direct(env, initial, lam, horizon, limits=None, rng=None, recovery_multiplier=1.0):
    """Exact jump-chain simulation of ``C_t`` started from ``initial``.

    ``recovery_multiplier`` scales every recovery rate; it exists only so
    that validation can be shown to catch a corrupted engine.
    """
    if lam < 0:
        raise ValueError("infection rate must be nonnegative")
    limits = limits or Limits()
    stream = _as_stream(rng)
    rand = stream.random
    expo = stream.expovariate
    a = lam / (2.0 * env.d)
    initial = _check_initial(initial, env.d)

    sites = []          # infected sites, unordered
    pos = {}            # site -> index in ``sites``
    rates = []          # total rate per infected site
    recs = []           # recovery rate per infected site
    nbrs = []           # open neighbours per infected site
    seen = set()
    total = 0.0
    bound = 0.0

    def add(x):
        nonlocal total, bound
        nb = env.open_neighbors(x)
        rec = recovery_multiplier * env.site_rate(x)
        r = rec + a * len(nb)
        pos[x] = len(sites)
        sites.append(x)
        rates.append(r)
        recs.append(rec)
        nbrs.append(nb)
        seen.add(x)
        total += r
        if r > bound:
            bound = r

    def remove(i):
        nonlocal total
        x = sites[i]
        total -= rates[i]
        last = len(sites) - 1
        if i != last:
            y = sites[last]
            sites[i], rates[i], recs[i], nbrs[i] = y, rates[last], recs[last], nbrs[last]
            pos[y] = i
        sites.pop()
        rates.pop()
        recs.pop()
        nbrs.pop()
        del pos[x]

    for x in initial:
        add(x)
    t = 0.0
    events = 0
    max_inf = len(sites)
    reason = None

    while sites:
        if events >= limits.max_events:
            reason = "events"
            break
        if len(seen) >= limits.max_ever_infected:
            reason = "ever_infected"
            break
        if limits.success_threshold is not None and len(seen) >= limits.success_threshold:
            reason = "threshold"
            break
        if events % 4096 == 0:
            total = math.fsum(rates)
        dt = expo(total)
        if t + dt > horizon:
            t = horizon
            break
        t += dt
        events += 1
        # rejection sampling of a site proportional to its rate
        n = len(sites)
        misses = 0
        while True:
            i = int(rand() * n)
            if rand() * bound < rates[i]:
                break
            misses += 1
            if misses == 64:
                bound = max(rates)
                misses = 0
        if rand() * rates[i] < recs[i]:
            remove(i)
        else:
            nb = nbrs[i]
            y = nb[int(rand() * len(nb))]
            if y not in pos:
                add(y)
                if len(sites) > max_inf:
                    max_inf = len(sites)

    return _outcome(sites, t, horizon, reason, max_inf, len(seen), events)


def _outcome(infected, t, horizon, reason, max_inf, ever, events):
    final = frozenset(infected)
    if not infected:
        return SimOutcome(EXTINCT, t, max_inf, ever, events, None, t, final)
    if reason is not None:
        return SimOutcome(TRUNCATED, None, max_inf, ever, events, reason, t, final)
    return SimOutcome(ALIVE, None, max_inf, ever, events, None, horizon, final)


class Timeline:
    """Lazily generated Poisson clocks of the graphical representation.

    Recovery marks at ``x`` have rate ``xi(x)``; arrows on the ordered pair
    ``(x, y)`` have rate ``lam/(2d)`` and exist only on open edges (the
    arrows of closed edges are never used, so omitting them does not change
    the law).  The k-th event of each clock is a pure function of
    ``(seed, clock key, k)``.
    """

    def __init__(self, env, lam, seed=0, recovery_multiplier=1.0):
        self.env = env
        self.lam = float(lam)
        self.arrow_rate = self.lam / (2.0 * env.d)
        self.seed = int(seed) & ((1 << 64) - 1)
        self.recovery_multiplier = recovery_multiplier
        self._marks = {}
        self._arrows = {}

    def _extend(self, times, rate, tag, key, s):
        t = times[-1] if times else 0.0
        n = len(times)
        seed = self.seed
        while t <= s:
            t -= math.log(keyed.keyed_uniform(seed, tag, n, *key)) / rate
            times.append(t)
            n += 1
        return t

    def next_mark(self, x, s):
        """First recovery mark at ``x`` strictly after time ``s``."""
        times = self._marks.get(x)
        if times is None:
            times = self._marks[x] = []
        if times and times[-1] > s:
            return times[bisect_right(times, s)]
        rate = self.recovery_multiplier * self.env.site_rate(x)
        return self._extend(times, rate, keyed.MARK, x, s)

    def next_arrow(self, x, y, s):
        """First arrow from ``x`` to ``y`` strictly after ``s`` (inf if the edge is closed)."""
        if self.arrow_rate == 0.0 or not self.env.edge_open(x, y):
            return math.inf
        key = (x, y)
        times = self._arrows.get(key)
        if times is None:
            times = self._arrows[key] = []
        if times and times[-1] > s:
            return times[bisect_right(times, s)]
        return self._extend(times, self.arrow_rate, keyed.ARROW, x + y, s)

    def marks_between(self, x, lo, hi):
        """Recovery marks at ``x`` in ``(lo, hi]``."""
        out = []
        s = lo
        while True:
            s = self.next_mark(x, s)
            if s > hi:
                return out
            out.append(s)

    def arrows_between(self, x, y, lo, hi):
        out = []
        s = lo
        while True:
            s = self.next_arrow(x, y, s)
            if s > hi:
                return out
            out.append(s)


def _timeline_for(env, lam, rng, timeline, recovery_multiplier):
    if timeline is not None:
        return timeline
    stream = _as_stream(rng)
    return Timeline(env, lam, stream.getrandbits(64), recovery_multiplier)


def run_graphical(env, initial, lam, horizon, limits=None, rng=None, *, timeline=None,
                  snapshot_times=None, record_paths=False, recovery_multiplier=1.0):
    """Read ``C_t`` off the graphical representation, event by event.

    Without an explicit ``timeline`` a fresh one is seeded from ``rng``.
    Returns a :class:`SimOutcome`; with ``snapshot_times`` the outcome also
    carries ``snapshots`` (the infected set after all events up to each time)
    and with ``record_paths`` a site -> infection path map for the final set.
    """
    if lam < 0:
        raise ValueError("infection rate must be nonnegative")
    limits = limits or Limits()
    tl = _timeline_for(env, lam, rng, timeline, recovery_multiplier)
    initial = _check_initial(initial, env.d)
    snap_order = []
    if snapshot_times is not None:
        snapshot_times = list(snapshot_times)
        snap_order = sorted(range(len(snapshot_times)), key=snapshot_times.__getitem__)
    snaps_at = [snapshot_times[i] for i in snap_order]
    snaps = []
    si = 0

    infected = {}       # site -> version of its current infection episode
    version = {}
    paths = {} if record_paths else None
    heap = []
    seen = set()
    push = heapq.heappush

    def infect(x, s, path):
        v = version.get(x, 0) + 1
        version[x] = v
        infected[x] = v
        seen.add(x)
        if paths is not None:
            paths[x] = path
        push(heap, (tl.next_mark(x, s), 0, x, (), v))
        for y in env.open_neighbors(x):
            push(heap, (tl.next_arrow(x, y, s), 1, x, y, v))

    for x in initial:
        infect(x, 0.0, (x,))
    t = 0.0
    events = 0
    max_inf = len(infected)
    reason = None

    while infected:
        if events >= limits.max_events:
            reason = "events"
            break
        if len(seen) >= limits.max_ever_infected:
            reason = "ever_infected"
            break
        if limits.success_threshold is not None and len(seen) >= limits.success_threshold:
            reason = "threshold"
            break
        s, kind, x, y, v = heapq.heappop(heap)
        if infected.get(x) != v:
            continue
        while si < len(snaps_at) and snaps_at[si] < s:
            snaps.append(frozenset(infected))
            si += 1
        if s > horizon:
            t = horizon
            break
        t = s
        events += 1
        if kind == 0:
            del infected[x]
        else:
            if y not in infected:
                infect(y, s, paths[x] + (y,) if paths is not None else None)
                if len(infected) > max_inf:
                    max_inf = len(infected)
            push(heap, (tl.next_arrow(x, y, s), 1, x, y, v))

    out = _outcome(infected, t, horizon, reason, max_inf, len(seen), events)
    if snapshot_times is not None:
        tail = frozenset(infected)
        while si < len(snaps_at):
            if out.verdict == TRUNCATED and snaps_at[si] > t:
                snaps.append(None)
            else:
                snaps.append(tail)
            si += 1
        ordered = [None] * len(snaps)
        for rank, i in enumerate(snap_order):
            ordered[i] = snaps[rank]
        out.snapshots = ordered
    if paths is not None:
        out.paths = {x: paths[x] for x in infected}
    out.timeline = tl
    return out


def run_coupled(env, initial_sets, lam, horizon, rng=None, times=(), *, timeline=None):
    """Run several initial conditions against one shared timeline.

    Returns ``{frozenset(initial): [C_t for t in times]}``.
    """
    tl = _timeline_for(env, lam, rng, timeline, 1.0)
    result = {}
    for init in initial_sets:
        key = frozenset(tuple(x) for x in init)
        if not key:
            result[key] = [frozenset() for _ in times]
            continue
        out = run_graphical(env, sorted(key), lam, horizon, timeline=tl, snapshot_times=list(times))
        result[key] = out.snapshots
    return result


def _check_path(path):
    path = [tuple(x) for x in path]
    for a, b in zip(path, path[1:]):
        if not adjacent(a, b):
            raise ValueError("consecutive path sites %r, %r are not adjacent" % (a, b))
    return path


def infection_path_arrivals(timeline, path, t):
    """Feasible arrival times at the last site of ``path`` before ``t``.

    Returns the sorted list of times ``t_{n-1}`` at which an infection path
    along ``path`` can deliver the infection to ``path[-1]`` (``[0.0]`` for a
    one-site path).  Each step keeps every feasible arrow time: the best
    predecessor of an arrow at time ``s`` is the latest feasible arrival
    strictly before ``s``, since that leaves the shortest interval in which a
    recovery mark could interfere.
    """
    path = _check_path(path)
    feasible = [0.0]
    for x, y in zip(path, path[1:]):
        if not timeline.env.edge_open(x, y):
            return []
        nxt = []
        for s in timeline.arrows_between(x, y, feasible[0], t):
            if s >= t:
                break
            k = bisect_right(feasible, s) - 1
            while k >= 0 and feasible[k] >= s:
                k -= 1
            if k < 0:
                continue
            b = feasible[k]
            if timeline.next_mark(x, b) > s:
                nxt.append(s)
        if not nxt:
            return []
        feasible = nxt
    return feasible


def is_infection_path(timeline, path, t):
    """Whether ``path`` is an infection path from ``(path[0], 0)`` to ``(path[-1], t)``."""
    arrivals = infection_path_arrivals(timeline, path, t)
    if not arrivals:
        return False
    last = path[-1] if isinstance(path[-1], tuple) else tuple(path[-1])
    b = max(s for s in arrivals if s < t) if len(path) > 1 else 0.0
    return timeline.next_mark(last, b) > t


# --- typed infection paths ------------------------------------------------

def _poisson_realization(gen, rates, t, size):
    """Event times on [0, t] of ``size`` Poisson processes, padded with inf.

    ``rates`` broadcasts against ``size``; returns an array (size, K) sorted
    along the last axis.
    """
    rates = np.broadcast_to(np.asarray(rates, dtype=float), (size,))
    counts = gen.poisson(rates * t)
    k = int(counts.max()) if size else 0
    times = gen.random((size, max(k, 1))) * t
    times[np.arange(max(k, 1))[None, :] >= counts[:, None]] = np.inf
    return np.sort(times, axis=1)


def _next_after(times, s):
    """Per row, the first entry of sorted ``times`` strictly greater than ``s``."""
    masked = np.where(times > s[..., None], times, np.inf)
    return masked.min(axis=-1)


def typed_path_event_prob_mc(path, types, t, *, lam, d, p, recovery, replicates,
                             seed=0, require_alive_at_t=True, chunk=50_000):
    """Monte Carlo probability of typed infection-path events, annealed.

    Each replicate draws the path's edge states, the recovery rate of every
    path vertex and explicit Poisson realisations of the marks and arrows on
    ``[0, t]``.  With ``types`` a sequence ``(j_0, ..., j_{n-1})`` the
    indicator of "the path is an infection path of that type at time ``t``" is
    averaged.  With ``types=None`` the per-replicate count of admissible
    types is averaged instead, which estimates the sum over all types.

    ``require_alive_at_t=False`` drops the no-mark condition on the final
    vertex, so ``t`` acts as a horizon for the event that the typed cascade
    completes at some time before ``t``.

    Returns ``(estimate, standard_error)``.
    """
    spec = parse_spec(recovery)
    path = _check_path(path)
    if len(set(path)) != len(path):
        raise ValueError("typed-path estimates need a self-avoiding path")
    n = len(path) - 1
    if types is not None:
        types = [int(j) for j in types]
        if len(types) != n or any(j < 1 for j in types):
            raise ValueError("need %d types, each >= 1" % n)
    gen = np.random.default_rng(seed)
    a = lam / (2.0 * d)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < replicates:
        size = min(chunk, replicates - done)
        done += size
        vals = _typed_chunk(gen, spec, n, types, t, a, p, size, require_alive_at_t)
        total += vals.sum()
        total_sq += np.square(vals).sum()
    mean = total / replicates
    var = max(total_sq / replicates - mean * mean, 0.0)
    return float(mean), math.sqrt(var / max(replicates - 1, 1))


def _typed_chunk(gen, spec, n, types, t, a, p, size, require_alive_at_t):
    xi = spec.quantile_array(gen.random((size, n + 1)))
    edges_open = (gen.random((size, n)) < p).all(axis=1) if n else np.ones(size, bool)
    marks = [_poisson_realization(gen, xi[:, m], t, size) for m in range(n + 1)]
    arrows = [_poisson_realization(gen, a, t, size) for _ in range(n)]
    rows = np.arange(size)

    if types is not None:
        cur = np.zeros(size)
        ok = edges_open.copy()
        for m in range(n):
            arr = arrows[m]
            idx = (arr <= cur[:, None]).sum(axis=1) + types[m] - 1
            hit = idx < arr.shape[1]
            tm = np.full(size, np.inf)
            tm[hit] = arr[rows[hit], idx[hit]]
            ok &= np.isfinite(tm) & (tm < t)
            ok &= _next_after(marks[m], cur) > tm
            cur = np.where(ok, tm, cur)
        if require_alive_at_t:
            ok &= _next_after(marks[n], cur) > t
        return ok.astype(float)

    # count admissible chains of arrow times, one chain per type vector
    prev_times = np.zeros((size, 1))
    prev_count = np.ones((size, 1))
    for m in range(n):
        arr = arrows[m]
        nm = _next_after(marks[m][:, None, :], prev_times)         # (size, K_prev)
        cond = (prev_times[:, :, None] < arr[:, None, :]) \
            & (nm[:, :, None] > arr[:, None, :]) & np.isfinite(arr)[:, None, :]
        prev_count = np.einsum("rk,rkl->rl", prev_count, cond.astype(float))
        prev_times = arr
    end_ok = np.isfinite(prev_times) & (prev_times < t)
    if require_alive_at_t:
        end_ok &= _next_after(marks[n][:, None, :], prev_times) > t
    counts = (prev_count * end_ok).sum(axis=1)
    return counts * edges_open
