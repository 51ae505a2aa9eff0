"""Batch experiments: survival sweeps, critical scans, oracle validation and reports.

Every replicate draws from a stream that is a pure function of
``(master_seed, mode, parameter index, replicate index)``, and results are
merged by replicate index, so output does not depend on the worker count.
Each mode writes one CSV file whose first line is a comment carrying the
SHA-256 of the canonical configuration.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
import csv
import hashlib
import io
import json
import logging
import math
import time

from scipy import stats

from . import rng as keyed
from .bounds import BoundReport, subcritical_series_bound
from .ctmc import bundled_instances, build_generator, expected_extinction_time, \
    extinction_prob_by, load_instance
from .errors import ConfigurationError
from .lattice import Environment, origin
from .recovery import format_spec, lambda_c, parse_spec, q_value
from .simulate import Limits, run_direct, run_graphical
from .walk import WalkParams, collision_prob, lemma42_bound

log = logging.getLogger(__name__)

MODES = ("subcritical", "supercritical", "critical_scan", "oracle_validate",
         "bounds_report", "walk_report")
ENGINES = {"direct": run_direct, "graphical": run_graphical}


@dataclass
class SweepConfig:
    mode: str
    dims: list = field(default_factory=lambda: [4, 8, 16])
    p: float = 0.5
    lambdas: list = None
    gammas: list = None
    xi: str = "point:1"
    horizon: str = None
    initial: str = None
    reps: int = 1000
    seed: int = 0
    measure: str = "annealed"
    engine: str = "direct"
    max_ever_infected: int = 10**5
    max_events: int = 10**7
    early_success: int = None
    walk_N_override: int = None
    walk_k: int = 3
    level: float = 0.05
    scan_iters: int = 6
    instances: list = None
    workers: int = 1
    timing: bool = False
    corrupt_recovery: float = 1.0   # test hook: scales recovery rates in oracle_validate
    out: str = None

    # --- construction and checks -------------------------------------------------

    @classmethod
    def from_dict(cls, doc):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigurationError("unknown config keys: %s" % ", ".join(sorted(unknown)))
        return cls(**doc)

    def validate(self):
        if self.mode not in MODES:
            raise ConfigurationError("mode must be one of %s" % ", ".join(MODES))
        self.spec = parse_spec(self.xi)
        if not (0.0 < self.p <= 1.0):
            raise ConfigurationError("p must lie in (0, 1]")
        if not self.dims or any(int(d) != d or d < 1 for d in self.dims):
            raise ConfigurationError("dimensions must be positive integers")
        self.dims = [int(d) for d in self.dims]
        if self.reps < 1:
            raise ConfigurationError("reps must be >= 1")
        if self.measure not in ("annealed", "quenched", "both"):
            raise ConfigurationError("measure must be annealed, quenched or both")
        if self.measure == "both" and self.mode != "critical_scan":
            raise ConfigurationError("measure 'both' is only meaningful for critical_scan")
        if self.engine not in ENGINES:
            raise ConfigurationError("engine must be direct or graphical")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        if self.lambdas is not None and self.gammas is not None:
            raise ConfigurationError("give lambdas or gammas, not both")
        for v in (self.lambdas or []) + (self.gammas or []):
            if v <= 0:
                raise ConfigurationError("infection rates must be positive")
        if self.mode in ("subcritical", "supercritical", "bounds_report", "walk_report") \
                and self.lambdas is None and self.gammas is None:
            self.gammas = [0.5] if self.mode in ("subcritical", "bounds_report") else [2.0]
        if self.initial is None:
            self.initial = "origin" if self.mode == "critical_scan" else "logdbox"
        self.horizon_rule()
        self.initial_rule()
        if self.mode == "bounds_report":
            for d in self.dims:
                if d < 2:
                    raise ConfigurationError("bounds_report needs d >= 2")
                for lam, _g in self.rates():
                    if lam >= self.lambda_c:
                        raise ConfigurationError(
                            "bounds_report needs lambda < lambda_c (got %g >= %g)"
                            % (lam, self.lambda_c))
        if self.mode == "walk_report":
            for d in self.dims:
                WalkParams(d, self.walk_N_override)
        if self.mode == "oracle_validate":
            self.load_instances()
        if self.mode == "critical_scan" and not (0.0 < self.level < 1.0):
            raise ConfigurationError("level must lie in (0, 1)")
        return self

    @property
    def lambda_c(self):
        return lambda_c(self.spec, self.p)

    def rates(self):
        """(lambda, gamma) pairs for the sweep."""
        if self.lambdas is not None:
            return [(lam, lam / self.lambda_c) for lam in self.lambdas]
        return [(g * self.lambda_c, g) for g in self.gammas or []]

    def horizon_rule(self):
        rule = self.horizon
        if rule is None:
            rule = "clog:auto" if self.mode == "subcritical" else "fixed:50"
        kind, _, val = rule.partition(":")
        if kind == "fixed":
            try:
                T = float(val)
            except ValueError:
                raise ConfigurationError("bad horizon %r" % rule) from None
            if T < 0:
                raise ConfigurationError("horizon must be nonnegative")
            return ("fixed", T)
        if kind == "clog":
            if val == "auto":
                return ("clog", None)
            try:
                c = float(val)
            except ValueError:
                raise ConfigurationError("bad horizon %r" % rule) from None
            if c <= 0:
                raise ConfigurationError("clog constant must be positive")
            return ("clog", c)
        raise ConfigurationError("horizon must be fixed:T or clog:c, got %r" % rule)

    def horizon_for(self, d, lam):
        kind, val = self.horizon_rule()
        if kind == "fixed":
            return val
        c = 1.0 / (2.0 * lam) if val is None else val
        return c * math.log(d)

    def initial_rule(self):
        rule = self.initial
        if rule == "origin":
            return ("origin", None)
        kind, _, val = rule.partition(":")
        if kind == "logdbox":
            if not val:
                return ("logdbox", None)
            try:
                r = int(val)
            except ValueError:
                raise ConfigurationError("bad initial rule %r" % rule) from None
            if r < 0:
                raise ConfigurationError("box radius must be >= 0")
            return ("logdbox", r)
        raise ConfigurationError("initial must be origin or logdbox[:r], got %r" % rule)

    def load_instances(self):
        if self.instances:
            return [load_instance(p) for p in self.instances]
        insts = bundled_instances()
        if len(insts) < 5:
            raise ConfigurationError("fewer than five bundled oracle instances")
        return insts

    def limits(self):
        return Limits(self.max_ever_infected, self.max_events, self.early_success)

    def canonical(self):
        doc = asdict(self)
        for key in ("out", "workers"):
            doc.pop(key, None)
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def digest(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def logd_size(d):
    return max(1, math.ceil(math.log(d)))


def random_box_sites(d, count, radius, stream):
    """``count`` distinct sites uniform in the box ``[-radius, radius]^d``."""
    if (2 * radius + 1) ** d < count:
        raise ConfigurationError("radius-%d box in d=%d holds fewer than %d sites"
                                 % (radius, d, count))
    chosen = []
    seen = set()
    while len(chosen) < count:
        x = tuple(stream.randint(-radius, radius) for _ in range(d))
        if x not in seen:
            seen.add(x)
            chosen.append(x)
    return chosen


def initial_sites(cfg, d, stream):
    kind, r = cfg.initial_rule()
    if kind == "origin":
        return [origin(d)]
    n = logd_size(d)
    return random_box_sites(d, n, n if r is None else r, stream)


# --- replicate execution -------------------------------------------------------

_QUENCHED = {}


def _quenched_env(d, p, xi, seed):
    key = (d, p, xi, seed)
    env = _QUENCHED.get(key)
    if env is None:
        if len(_QUENCHED) > 16:
            _QUENCHED.clear()
        env = _QUENCHED[key] = Environment(d, p, xi, seed)
    return env


@dataclass(frozen=True)
class _Task:
    cfg_json: str
    mode: str
    d: int
    lam: float
    horizon: float
    measure: str
    param_index: int
    reps: range


def _run_chunk(task):
    cfg = SweepConfig.from_dict(json.loads(task.cfg_json)).validate()
    engine = ENGINES[cfg.engine]
    limits = cfg.limits()
    env_seed = keyed.derive_seed(cfg.seed, task.mode, task.param_index, "environment")
    out = []
    for rep in task.reps:
        stream = keyed.make_stream(cfg.seed, task.mode, task.param_index, rep)
        if task.measure == "quenched":
            env = _quenched_env(task.d, cfg.p, cfg.xi, env_seed)
        else:
            env = Environment(task.d, cfg.p, cfg.spec, stream.getrandbits(64))
        init = initial_sites(cfg, task.d, stream)
        res = engine(env, init, task.lam, task.horizon, limits, stream)
        out.append((res.verdict, res.extinction_time, res.truncation_reason))
    return out


def _config_json(cfg):
    doc = asdict(cfg)
    doc.pop("out", None)
    return json.dumps(doc, sort_keys=True)


def _replicates(cfg, mode, d, lam, horizon, measure, param_index, pool=None):
    cfg_json = _config_json(cfg)
    n_chunks = max(1, min(cfg.workers * 4, cfg.reps))
    bounds = [round(i * cfg.reps / n_chunks) for i in range(n_chunks + 1)]
    tasks = [_Task(cfg_json, mode, d, lam, horizon, measure, param_index,
                   range(bounds[i], bounds[i + 1])) for i in range(n_chunks)]
    if pool is None:
        chunks = [_run_chunk(t) for t in tasks]
    else:
        chunks = list(pool.map(_run_chunk, tasks))
    return [r for chunk in chunks for r in chunk]


def wilson_interval(k, n, level=0.95):
    ci = stats.binomtest(k, n).proportion_ci(level, method="wilson")
    return float(ci.low), float(ci.high)


def summarize(results, early_success_counts=True):
    n = len(results)
    ext_times = [t for v, t, _ in results if v == "extinct"]
    n_trunc = sum(1 for v, _, _ in results if v == "truncated")
    n_early = sum(1 for _, _, r in results if r == "threshold")
    survived = n - len(ext_times)
    if not early_success_counts:
        survived -= n_early
    frac = survived / n
    lo, hi = wilson_interval(survived, n)
    if ext_times:
        mean_t = math.fsum(ext_times) / len(ext_times)
        sd = math.sqrt(math.fsum((t - mean_t) ** 2 for t in ext_times) / max(len(ext_times) - 1, 1))
        se_t = sd / math.sqrt(len(ext_times))
    else:
        mean_t = se_t = float("nan")
    return {
        "reps": n,
        "survived": survived,
        "survival_fraction": frac,
        "se": math.sqrt(frac * (1 - frac) / n),
        "wilson_lo": lo,
        "wilson_hi": hi,
        "n_extinct": len(ext_times),
        "mean_extinction_time": mean_t,
        "se_extinction_time": se_t,
        "n_truncated": n_trunc,
        "n_early_success": n_early,
    }


# --- modes ---------------------------------------------------------------------

SWEEP_COLUMNS = ["mode", "measure", "engine", "d", "lambda", "gamma", "lambda_c", "p", "xi",
                 "horizon", "initial", "initial_size", "reps", "survived",
                 "survival_fraction", "se", "wilson_lo", "wilson_hi", "n_extinct",
                 "mean_extinction_time", "se_extinction_time", "n_truncated",
                 "n_early_success", "proxy"]


def _proxy_label(cfg, horizon):
    label = "nonempty_at_t=%r" % horizon
    if cfg.early_success:
        label += ";or_ever_infected>=%d" % cfg.early_success
    return label


def run_sweep(cfg, pool=None):
    """Survival-fraction table for subcritical / supercritical sweeps."""
    rows = []
    index = 0
    for d in cfg.dims:
        for lam, gamma in cfg.rates():
            start = time.perf_counter()
            horizon = cfg.horizon_for(d, lam)
            res = _replicates(cfg, cfg.mode, d, lam, horizon, cfg.measure, index, pool)
            row = {
                "mode": cfg.mode, "measure": cfg.measure, "engine": cfg.engine, "d": d,
                "lambda": lam, "gamma": gamma, "lambda_c": cfg.lambda_c, "p": cfg.p,
                "xi": format_spec(cfg.spec), "horizon": horizon, "initial": cfg.initial,
                "initial_size": 1 if cfg.initial == "origin" else logd_size(d),
                "proxy": _proxy_label(cfg, horizon),
            }
            row.update(summarize(res))
            if cfg.timing:
                row["wall_time"] = time.perf_counter() - start
            log.info("d=%d lambda=%g survival=%.4f", d, lam, row["survival_fraction"])
            rows.append(row)
            index += 1
    return rows


SCAN_COLUMNS = ["mode", "measure", "d", "lambda_c", "p", "xi", "horizon", "level", "reps",
                "lambda_hat", "bracket_lo", "bracket_hi", "ratio_to_lambda_c",
                "widened", "evaluations"]


def critical_scan(cfg, pool=None):
    """Bisect the survival-proxy curve for the level crossing, per dimension."""
    measures = ["annealed", "quenched"] if cfg.measure == "both" else [cfg.measure]
    rows = []
    for mi, measure in enumerate(measures):
        for di, d in enumerate(cfg.dims):
            lam_c = cfg.lambda_c
            evals = {}
            # one parameter index per (measure, d): every scan point reuses the
            # same replicate streams, and in quenched mode the same environment
            pidx = mi * len(cfg.dims) + di

            def frac_at(lam):
                if lam not in evals:
                    horizon = cfg.horizon_for(d, lam) if lam > 0 else 0.0
                    res = _replicates(cfg, "critical_scan", d, lam, horizon, measure, pidx,
                                      pool)
                    s = summarize(res)
                    evals[lam] = (s["survival_fraction"], s["se"])
                return evals[lam][0]

            lo, hi = 0.0, 4.0 * lam_c
            widened = False
            if frac_at(hi) < cfg.level:
                widened = True
                lo = hi
                hi = math.inf
            else:
                for _ in range(cfg.scan_iters):
                    mid = 0.5 * (lo + hi)
                    if frac_at(mid) >= cfg.level:
                        hi = mid
                    else:
                        lo = mid
                # widen over any non-monotone evaluations
                pts = sorted(evals.items())
                for (l1, (f1, s1)), (l2, (f2, s2)) in zip(pts, pts[1:]):
                    if f1 > f2 + 2.0 * math.hypot(s1, s2):
                        widened = True
                        lo = min(lo, l1)
                        hi = max(hi, l2)
            lam_hat = 0.5 * (lo + hi) if math.isfinite(hi) else lo
            horizon = cfg.horizon_for(d, lam_hat if lam_hat > 0 else lam_c)
            rows.append({
                "mode": "critical_scan", "measure": measure, "d": d, "lambda_c": lam_c,
                "p": cfg.p, "xi": format_spec(cfg.spec), "horizon": horizon,
                "level": cfg.level, "reps": cfg.reps, "lambda_hat": lam_hat,
                "bracket_lo": lo, "bracket_hi": hi, "ratio_to_lambda_c": lam_hat / lam_c,
                "widened": widened,
                "evaluations": ";".join("%r:%r" % (k, v[0]) for k, v in sorted(evals.items())),
            })
    return rows


ORACLE_COLUMNS = ["instance", "engine", "quantity", "T", "exact", "estimate", "se", "z",
                  "passed"]


def oracle_validate(cfg, z_max=3.0):
    """Both engines against the exact chain on every instance; returns (rows, all_passed)."""
    rows = []
    ok = True
    for ii, inst in enumerate(cfg.load_instances()):
        Q = build_generator(inst)
        init = inst.initial or [inst.sites[0]]
        exact_p = extinction_prob_by(inst, init, inst.T, Q)
        exact_m = expected_extinction_time(inst, init, Q)
        env = inst.environment()
        for ei, (name, engine) in enumerate(sorted(ENGINES.items())):
            stream = keyed.make_stream(cfg.seed, "oracle_validate", ii, ei)
            times = []
            for _ in range(cfg.reps):
                res = engine(env, init, inst.lam, math.inf, rng=stream,
                             recovery_multiplier=cfg.corrupt_recovery)
                times.append(res.extinction_time)
            n = len(times)
            est_p = sum(1 for t in times if t <= inst.T) / n
            se_p = math.sqrt(max(exact_p * (1 - exact_p), 1e-12) / n)
            mean_t = math.fsum(times) / n
            se_m = math.sqrt(math.fsum((t - mean_t) ** 2 for t in times) / (n - 1) / n) \
                if n > 1 else math.inf
            for quantity, exact, est, se in (("P_extinct_by_T", exact_p, est_p, se_p),
                                             ("mean_extinction_time", exact_m, mean_t, se_m)):
                z = (est - exact) / se if se > 0 else 0.0
                passed = abs(z) <= z_max
                ok &= passed
                rows.append({"instance": inst.name, "engine": name, "quantity": quantity,
                             "T": inst.T, "exact": exact, "estimate": est, "se": se,
                             "z": z, "passed": passed})
    return rows, ok


def bounds_report(cfg):
    rows = []
    for d in cfg.dims:
        for lam, _g in cfg.rates():
            rep = subcritical_series_bound(d, lam, cfg.p, cfg.spec)
            rows.append(dict(zip(BoundReport.columns(), rep.as_row())))
    return rows


WALK_COLUMNS = ["d", "N", "k", "quantity", "pair", "lambda", "gamma", "q", "two_d_q",
                "estimate", "se", "warnings"]


def walk_report(cfg):
    """Collision probabilities and the second-moment survival bound per dimension."""
    rows = []
    for di, d in enumerate(cfg.dims):
        params = WalkParams(d, cfg.walk_N_override)
        k = cfg.walk_k
        x = origin(d)
        y = (1,) + (0,) * (d - 1)
        warn = "N_override=%d" % params.N if params.overridden else ""
        base = {"d": d, "N": params.N, "k": k, "lambda": "", "gamma": "", "q": "",
                "two_d_q": ""}
        for pi, (label, b) in enumerate((("x=y", x), ("adjacent", y))):
            est, se = collision_prob(params, x, b, k, cfg.reps,
                                     seed=keyed.derive_seed(cfg.seed, "walk", di, pi))
            rows.append(dict(base, quantity="collision_prob", pair=label, estimate=est,
                             se=se, warnings=warn))
        for gi, (lam, gamma) in enumerate(cfg.rates()):
            stream = keyed.make_stream(cfg.seed, "walk_A", di, gi)
            A = random_box_sites(d, logd_size(d), logd_size(d), stream)
            q = q_value(cfg.spec, cfg.p, lam, d)
            res = lemma42_bound(params, A, lam, cfg.p, cfg.spec, k, cfg.reps,
                                seed=keyed.derive_seed(cfg.seed, "lemma42", di, gi))
            rows.append(dict(base, quantity="lemma42_bound", pair="A(d)^2", **{
                "lambda": lam, "gamma": gamma, "q": q, "two_d_q": 2 * d * q,
                "estimate": res.bound, "se": res.bound_se,
                "warnings": ";".join(res.warnings)}))
    return rows


# --- output --------------------------------------------------------------------

def write_csv(rows, columns, cfg, fh):
    fh.write("# contactperc mode=%s config_sha256=%s\n" % (cfg.mode, cfg.digest()))
    if cfg.timing and rows and "wall_time" in rows[0]:
        columns = columns + ["wall_time"]
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c, "")) for c in columns])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def execute(cfg):
    """Run the configured mode; returns (csv_text, passed)."""
    cfg.validate()
    passed = True
    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        if cfg.mode in ("subcritical", "supercritical"):
            rows, cols = run_sweep(cfg, pool), SWEEP_COLUMNS
        elif cfg.mode == "critical_scan":
            rows, cols = critical_scan(cfg, pool), SCAN_COLUMNS
        elif cfg.mode == "oracle_validate":
            (rows, passed), cols = oracle_validate(cfg), ORACLE_COLUMNS
        elif cfg.mode == "bounds_report":
            rows, cols = bounds_report(cfg), BoundReport.columns()
        else:
            rows, cols = walk_report(cfg), WALK_COLUMNS
    finally:
        if pool is not None:
            pool.shutdown()
    buf = io.StringIO()
    write_csv(rows, cols, cfg, buf)
    return buf.getvalue(), passed
