"""Monte Carlo drivers and their configuration and report types.

Every trial is keyed by ``derive_seed(seed, "trial", n, trial)`` and draws
all of its randomness from named sub-streams of that seed, so a report is a
pure function of its config. Trials run on a thread pool and are merged in
trial order.
"""

from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats
from scipy.special import gammaln, logsumexp

from . import __version__, measures, metrics, rootfind, sympoly
from .errors import (DegenerateError, DerivRootsError, PoleError, ScaleError, TrialError,
                     ValidationError)
from .rng import derive_seed, stream

COUNTER_M_CAP = 10**6
COUNTER_BATCH_DRAWS = 2_000_000
DEGENERATE_C = 1e-9
GAUSS_LUCAS_TOL = 1e-7
RESAMPLE_LIMIT = 100
CI_LEVEL = 0.95


def default_threads():
    env = os.environ.get("DERIVROOTS_THREADS")
    if env:
        try:
            v = int(env)
        except ValueError:
            raise ValidationError(f"expected a positive integer, got {env!r}", "DERIVROOTS_THREADS")
        if v < 1:
            raise ValidationError(f"expected a positive integer, got {env!r}", "DERIVROOTS_THREADS")
        return v
    return os.cpu_count() or 1


def trial_seed(seed, n, trial):
    return derive_seed(seed, "trial", int(n), int(trial))


def wilson_interval(successes, trials, level=CI_LEVEL):
    """Wilson score interval for a binomial proportion."""
    ci = stats.binomtest(int(successes), int(trials)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


# ---------------------------------------------------------------- config pieces


def _int(v, path, lo=None):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or v != int(v):
        raise ValidationError(f"expected an integer, got {v!r}", path)
    v = int(v)
    if lo is not None and v < lo:
        raise ValidationError(f"must be >= {lo}, got {v}", path)
    return v


def _real(v, path, positive=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ValidationError(f"expected a finite number, got {v!r}", path)
    if positive and not v > 0:
        raise ValidationError(f"must be positive, got {v!r}", path)
    return float(v)


def _complex(v, path):
    return measures._j2c(v, path)


def _need(d, key, path):
    if key not in d:
        raise ValidationError("missing field", f"{path}.{key}")
    return d[key]


def _check_keys(d, allowed, path):
    if not isinstance(d, dict):
        raise ValidationError("expected an object", path)
    for key in d:
        if key not in allowed:
            raise ValidationError(f"unknown field {key!r}", f"{path}.{key}")


K_RULES = ("fixed", "n_over_log", "linear", "sqrt", "n_over_log2")


@dataclass(frozen=True)
class KRule:
    """k as a function of n.

    ``fixed``: k = c; ``n_over_log``: floor(c n / log n); ``linear``:
    floor(c n); ``sqrt``: floor(c sqrt n); ``n_over_log2``: floor(c n / (log n)^2).
    """

    kind: str
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in K_RULES:
            raise ValidationError(f"unknown k rule {self.kind!r}; expected one of {K_RULES}", "k_rule.kind")
        if not (math.isfinite(self.c) and self.c > 0):
            raise ValidationError(f"must be positive, got {self.c}", "k_rule.c")
        if self.kind == "fixed" and self.c != int(self.c):
            raise ValidationError("fixed k must be an integer", "k_rule.c")

    def __call__(self, n):
        n = int(n)
        c = self.c
        if self.kind == "fixed":
            return int(c)
        if self.kind == "linear":
            return int(math.floor(c * n))
        if self.kind == "sqrt":
            return int(math.floor(c * math.sqrt(n)))
        L = math.log(n)
        return int(math.floor(c * n / (L if self.kind == "n_over_log" else L * L)))

    def checked(self, n, path="k_rule"):
        k = self(n)
        if not 1 <= k < n:
            raise ValidationError(f"rule gives k={k} at n={n}; need 1 <= k < n", path)
        return k

    def to_dict(self):
        return {"kind": self.kind, "c": self.c}

    @classmethod
    def from_dict(cls, d, path="k_rule"):
        _check_keys(d, {"kind", "c"}, path)
        return cls(str(_need(d, "kind", path)), _real(d.get("c", 1.0), f"{path}.c", positive=True))


A_RULES = ("constant", "power", "count")


@dataclass(frozen=True)
class AlphaRule:
    """Mixing weight of the noise law: ``constant`` c, ``power`` c n^-p, ``count`` c / n."""

    kind: str
    c: float
    p: float = 0.5

    def __post_init__(self):
        if self.kind not in A_RULES:
            raise ValidationError(f"unknown alpha rule {self.kind!r}; expected one of {A_RULES}",
                                  "alpha_rule.kind")
        if not (math.isfinite(self.c) and self.c >= 0):
            raise ValidationError(f"must be >= 0, got {self.c}", "alpha_rule.c")
        if not (math.isfinite(self.p) and self.p >= 0):
            raise ValidationError(f"must be >= 0, got {self.p}", "alpha_rule.p")

    def __call__(self, n):
        if self.kind == "constant":
            return self.c
        if self.kind == "power":
            return self.c * float(n) ** -self.p
        return self.c / float(n)

    def to_dict(self):
        return {"kind": self.kind, "c": self.c, "p": self.p}

    @classmethod
    def from_dict(cls, d, path="alpha_rule"):
        _check_keys(d, {"kind", "c", "p"}, path)
        return cls(str(_need(d, "kind", path)), _real(_need(d, "c", path), f"{path}.c"),
                   _real(d.get("p", 0.5), f"{path}.p"))


def _n_grid(v, path):
    if not isinstance(v, list) or not v:
        raise ValidationError("expected a nonempty list of integers", path)
    return tuple(_int(x, f"{path}[{i}]", lo=2) for i, x in enumerate(v))


# ---------------------------------------------------------------- configs


@dataclass(frozen=True)
class ExperimentConfig:
    """Shared by convergence, anti-concentration and moment runs.

    ``reference_size`` defaults to n; ``mobius_maps`` is the number of fixed
    random maps for the log-potential diagnostics.
    """

    measure: object
    n_grid: tuple
    k_rule: KRule
    trials: int
    seed: int
    epsilon: float = 1.0
    eval_point: complex = 0j
    reference_size: int | None = None
    mobius_maps: int = 10

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "eval_point", complex(self.eval_point))
        self.validate()

    def validate(self):
        measures.validate(self.measure)
        if not self.n_grid:
            raise ValidationError("empty grid", "n_grid")
        for i, n in enumerate(self.n_grid):
            if n < 2:
                raise ValidationError(f"must be >= 2, got {n}", f"n_grid[{i}]")
            self.k_rule.checked(n)
        if self.trials < 1:
            raise ValidationError(f"must be >= 1, got {self.trials}", "trials")
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValidationError(f"must be positive, got {self.epsilon}", "epsilon")
        if self.reference_size is not None and self.reference_size < 1:
            raise ValidationError(f"must be >= 1, got {self.reference_size}", "reference_size")
        if self.mobius_maps < 0:
            raise ValidationError(f"must be >= 0, got {self.mobius_maps}", "mobius_maps")
        return self

    def k_for(self, n):
        return self.k_rule.checked(n)

    def to_dict(self):
        return {"measure": measures.to_json(self.measure), "n_grid": list(self.n_grid),
                "k_rule": self.k_rule.to_dict(), "trials": self.trials, "seed": self.seed,
                "epsilon": self.epsilon, "eval_point": [self.eval_point.real, self.eval_point.imag],
                "reference_size": self.reference_size, "mobius_maps": self.mobius_maps}

    @classmethod
    def from_dict(cls, d, path="config"):
        _check_keys(d, {"experiment", "measure", "n_grid", "k_rule", "trials", "seed", "epsilon",
                        "eval_point", "reference_size", "mobius_maps"}, path)
        ref = d.get("reference_size")
        return cls(
            measure=measures.from_json(_need(d, "measure", path), f"{path}.measure"),
            n_grid=_n_grid(_need(d, "n_grid", path), f"{path}.n_grid"),
            k_rule=KRule.from_dict(_need(d, "k_rule", path), f"{path}.k_rule"),
            trials=_int(_need(d, "trials", path), f"{path}.trials", lo=1),
            seed=_int(_need(d, "seed", path), f"{path}.seed", lo=0),
            epsilon=_real(d.get("epsilon", 1.0), f"{path}.epsilon", positive=True),
            eval_point=_complex(d.get("eval_point", 0.0), f"{path}.eval_point"),
            reference_size=None if ref is None else _int(ref, f"{path}.reference_size", lo=1),
            mobius_maps=_int(d.get("mobius_maps", 10), f"{path}.mobius_maps", lo=0),
        )


@dataclass(frozen=True)
class PerturbationConfig:
    """Roots from (1 - alpha_n) mu + alpha_n nu.

    ``split="random"`` labels each root by an independent Bernoulli(alpha_n);
    ``"deterministic"`` takes exactly round(alpha_n n) roots from nu.
    ``delta`` is the upper Chernoff threshold fraction (default 4 alpha_n).
    """

    mu: object
    nu: object
    alpha_rule: AlphaRule
    k_rule: KRule
    n_grid: tuple
    trials: int
    seed: int
    split: str = "random"
    delta: float | None = None
    reference_size: int | None = None
    scatter: bool = True

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        self.validate()

    def validate(self):
        measures.validate(self.mu, "mu")
        measures.validate(self.nu, "nu")
        if self.split not in ("random", "deterministic"):
            raise ValidationError(f"expected 'random' or 'deterministic', got {self.split!r}", "split")
        if not self.n_grid:
            raise ValidationError("empty grid", "n_grid")
        prev = math.inf
        for i, n in enumerate(sorted(self.n_grid)):
            a = self.alpha_rule(n)
            if not 0.0 <= a < 1.0:
                raise ValidationError(f"alpha({n}) = {a} outside [0, 1)", "alpha_rule")
            if a > prev:
                raise ValidationError("alpha must be nonincreasing in n", "alpha_rule")
            prev = a
            self.k_rule.checked(n)
        if self.trials < 1:
            raise ValidationError(f"must be >= 1, got {self.trials}", "trials")
        if self.delta is not None and not 0 < self.delta <= 1:
            raise ValidationError(f"must lie in (0, 1], got {self.delta}", "delta")
        if self.reference_size is not None and self.reference_size < 1:
            raise ValidationError(f"must be >= 1, got {self.reference_size}", "reference_size")
        return self

    def to_dict(self):
        return {"mu": measures.to_json(self.mu), "nu": measures.to_json(self.nu),
                "alpha_rule": self.alpha_rule.to_dict(), "k_rule": self.k_rule.to_dict(),
                "n_grid": list(self.n_grid), "trials": self.trials, "seed": self.seed, "split": self.split,
                "delta": self.delta, "reference_size": self.reference_size, "scatter": self.scatter}

    @classmethod
    def from_dict(cls, d, path="config"):
        _check_keys(d, {"experiment", "mu", "nu", "alpha_rule", "k_rule", "n_grid", "trials", "seed",
                        "split", "delta", "reference_size", "scatter"}, path)
        ref, delta = d.get("reference_size"), d.get("delta")
        return cls(
            mu=measures.from_json(_need(d, "mu", path), f"{path}.mu"),
            nu=measures.from_json(_need(d, "nu", path), f"{path}.nu"),
            alpha_rule=AlphaRule.from_dict(_need(d, "alpha_rule", path), f"{path}.alpha_rule"),
            k_rule=KRule.from_dict(_need(d, "k_rule", path), f"{path}.k_rule"),
            n_grid=_n_grid(_need(d, "n_grid", path), f"{path}.n_grid"),
            trials=_int(_need(d, "trials", path), f"{path}.trials", lo=1),
            seed=_int(_need(d, "seed", path), f"{path}.seed", lo=0),
            split=str(d.get("split", "random")),
            delta=None if delta is None else _real(delta, f"{path}.delta", positive=True),
            reference_size=None if ref is None else _int(ref, f"{path}.reference_size", lo=1),
            scatter=bool(d.get("scatter", True)),
        )


@dataclass(frozen=True)
class FrostmanConfig:
    """Probe points default to ``num_probes`` draws from the measure itself."""

    measure: object
    sample_size: int
    r_grid: tuple
    seed: int
    probes: tuple | None = None
    num_probes: int = 10
    zero_tol: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "r_grid", tuple(float(r) for r in self.r_grid))
        if self.probes is not None:
            object.__setattr__(self, "probes", tuple(complex(p) for p in self.probes))
        measures.validate(self.measure)
        if self.sample_size < 1:
            raise ValidationError(f"must be >= 1, got {self.sample_size}", "sample_size")
        if self.num_probes < 1:
            raise ValidationError(f"must be >= 1, got {self.num_probes}", "num_probes")
        if self.probes is not None and not self.probes:
            raise ValidationError("empty probe list", "probes")
        r = np.asarray(self.r_grid)
        if r.size == 0 or np.any(r <= 0) or np.any(r >= 1) or np.any(np.diff(r) >= 0):
            raise ValidationError("radii must be strictly decreasing in (0, 1)", "r_grid")

    def to_dict(self):
        return {"measure": measures.to_json(self.measure), "sample_size": self.sample_size,
                "r_grid": list(self.r_grid), "seed": self.seed,
                "probes": None if self.probes is None else [[p.real, p.imag] for p in self.probes],
                "num_probes": self.num_probes, "zero_tol": self.zero_tol}

    @classmethod
    def from_dict(cls, d, path="config"):
        _check_keys(d, {"experiment", "measure", "sample_size", "r_grid", "seed", "probes", "num_probes",
                        "zero_tol"}, path)
        rg = _need(d, "r_grid", path)
        if not isinstance(rg, list) or not rg:
            raise ValidationError("expected a nonempty list", f"{path}.r_grid")
        probes = d.get("probes")
        if probes is not None:
            if not isinstance(probes, list):
                raise ValidationError("expected a list", f"{path}.probes")
            probes = tuple(_complex(p, f"{path}.probes[{i}]") for i, p in enumerate(probes))
        return cls(
            measure=measures.from_json(_need(d, "measure", path), f"{path}.measure"),
            sample_size=_int(_need(d, "sample_size", path), f"{path}.sample_size", lo=1),
            r_grid=tuple(_real(r, f"{path}.r_grid[{i}]", positive=True) for i, r in enumerate(rg)),
            seed=_int(_need(d, "seed", path), f"{path}.seed", lo=0),
            probes=probes,
            num_probes=_int(d.get("num_probes", 10), f"{path}.num_probes", lo=1),
            zero_tol=_real(d.get("zero_tol", 0.05), f"{path}.zero_tol", positive=True),
        )


@dataclass(frozen=True)
class CounterexampleConfig:
    q: float
    k: int
    trials: int
    seed: int

    def __post_init__(self):
        if not (math.isfinite(self.q) and 0 < self.q < 1):
            raise ValidationError(f"must lie in (0, 1), got {self.q}", "q")
        if self.k < 1:
            raise ValidationError(f"must be >= 1, got {self.k}", "k")
        if self.trials < 1:
            raise ValidationError(f"must be >= 1, got {self.trials}", "trials")

    def to_dict(self):
        return {"q": self.q, "k": self.k, "trials": self.trials, "seed": self.seed}

    @classmethod
    def from_dict(cls, d, path="config"):
        _check_keys(d, {"experiment", "q", "k", "trials", "seed"}, path)
        return cls(_real(_need(d, "q", path), f"{path}.q"), _int(_need(d, "k", path), f"{path}.k", lo=1),
                   _int(_need(d, "trials", path), f"{path}.trials", lo=1),
                   _int(_need(d, "seed", path), f"{path}.seed", lo=0))


@dataclass(frozen=True)
class JensenConfig:
    measure: object
    n: int
    k_values: tuple
    cases: int
    seed: int
    grid_points: int = metrics.JENSEN_GRID

    def __post_init__(self):
        object.__setattr__(self, "k_values", tuple(int(k) for k in self.k_values))
        measures.validate(self.measure)
        if not self.k_values:
            raise ValidationError("empty list", "k_values")
        for i, k in enumerate(self.k_values):
            if not 1 <= k < self.n:
                raise ValidationError(f"need 1 <= k < n, got k={k}", f"k_values[{i}]")
        if self.cases < 1:
            raise ValidationError(f"must be >= 1, got {self.cases}", "cases")
        if self.grid_points < 16:
            raise ValidationError(f"must be >= 16, got {self.grid_points}", "grid_points")

    def to_dict(self):
        return {"measure": measures.to_json(self.measure), "n": self.n, "k_values": list(self.k_values),
                "cases": self.cases, "seed": self.seed, "grid_points": self.grid_points}

    @classmethod
    def from_dict(cls, d, path="config"):
        _check_keys(d, {"experiment", "measure", "n", "k_values", "cases", "seed", "grid_points"}, path)
        ks = _need(d, "k_values", path)
        if not isinstance(ks, list):
            raise ValidationError("expected a list of integers", f"{path}.k_values")
        return cls(
            measure=measures.from_json(_need(d, "measure", path), f"{path}.measure"),
            n=_int(_need(d, "n", path), f"{path}.n", lo=2),
            k_values=tuple(_int(k, f"{path}.k_values[{i}]", lo=1) for i, k in enumerate(ks)),
            cases=_int(_need(d, "cases", path), f"{path}.cases", lo=1),
            seed=_int(_need(d, "seed", path), f"{path}.seed", lo=0),
            grid_points=_int(d.get("grid_points", metrics.JENSEN_GRID), f"{path}.grid_points", lo=16),
        )


CONFIG_TYPES = {
    "convergence": ExperimentConfig,
    "anticonc": ExperimentConfig,
    "moments": ExperimentConfig,
    "perturbation": PerturbationConfig,
    "frostman": FrostmanConfig,
    "counterexample": CounterexampleConfig,
    "jensen": JensenConfig,
}


def parse_config(experiment, obj):
    """Build the config object for ``experiment`` from parsed JSON."""
    if experiment not in CONFIG_TYPES:
        raise ValidationError(f"unknown experiment {experiment!r}", "experiment")
    if not isinstance(obj, dict):
        raise ValidationError("expected a JSON object", "config")
    named = obj.get("experiment")
    if named is not None and named != experiment:
        raise ValidationError(f"config is for {named!r}, not {experiment!r}", "config.experiment")
    try:
        return CONFIG_TYPES[experiment].from_dict(obj)
    except ValidationError as e:
        if e.field and not e.field.startswith("config"):
            raise ValidationError(e.message, f"config.{e.field}") from e
        raise


# ---------------------------------------------------------------- reports


def aggregate(records):
    """Per-(n, metric) count, mean, standard error, median and quartiles.

    Metrics are all numeric record fields except the bookkeeping ones;
    non-finite values are excluded and ``count`` says how many were kept.
    """
    skip = {"n", "k", "trial", "seed", "wall_time"}
    out = []
    ns = sorted({r["n"] for r in records if "n" in r})
    for n in ns:
        rows = [r for r in records if r.get("n") == n]
        names = []
        for r in rows:
            for key, v in r.items():
                if key not in skip and key not in names and isinstance(v, (bool, int, float, np.number)):
                    names.append(key)
        for name in names:
            v = np.array([float(r[name]) for r in rows if name in r], dtype=float)
            v = v[np.isfinite(v)]
            row = {"n": n, "metric": name, "count": int(v.size)}
            if v.size:
                q1, med, q3 = np.percentile(v, [25, 50, 75])
                se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
                row.update(mean=float(v.mean()), se=se, median=float(med), q1=float(q1), q3=float(q3))
            else:
                row.update(mean=math.nan, se=math.nan, median=math.nan, q1=math.nan, q3=math.nan)
            out.append(row)
    return out


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def rows_to_csv(rows, columns=None):
    if columns is None:
        columns = []
        for r in rows:
            for key in r:
                if key not in columns:
                    columns.append(key)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow(["" if r.get(c) is None else _fmt(r[c]) for c in columns])
    return buf.getvalue()


def records_from_csv(text):
    """Inverse of :meth:`TrialReport.to_csv` for numeric columns."""
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        rec = {}
        for key, v in row.items():
            if v == "":
                continue
            try:
                iv = int(v)
                rec[key] = iv
                continue
            except ValueError:
                pass
            try:
                rec[key] = float(v)
            except ValueError:
                rec[key] = v
        out.append(rec)
    return out


@dataclass
class TrialReport:
    """Per-trial records, a config echo and experiment-level extras.

    ``scatter`` (perturbation only) holds rows ``{n, trial, layer, re, im}``.
    """

    experiment: str
    config: dict
    records: list
    extra: dict = field(default_factory=dict)
    scatter: list | None = None

    def aggregate(self):
        return aggregate(self.records)

    def values(self, metric, n=None):
        return np.array([float(r[metric]) for r in self.records
                         if metric in r and (n is None or r.get("n") == n)])

    def median(self, metric, n=None):
        return float(np.median(self.values(metric, n)))

    def deterministic_records(self):
        """Records without wall-clock fields; equal across reruns."""
        return [{k: v for k, v in r.items() if k != "wall_time"} for r in self.records]

    def to_csv(self):
        return rows_to_csv(self.records)

    def scatter_csv(self):
        return rows_to_csv(self.scatter or [], ["n", "trial", "layer", "re", "im"])

    def to_json(self):
        return {"experiment": self.experiment, "version": __version__, "config": self.config,
                "aggregate": self.aggregate(), "extra": self.extra}


def _wrap(fn, n, trial, seed, *args):
    t0 = time.perf_counter()
    try:
        rec = fn(n, trial, seed, *args)
    except TrialError:
        raise
    except (DerivRootsError, ArithmeticError, ValueError, RuntimeError) as e:
        raise TrialError(f"trial {trial} at n={n} failed (trial seed {seed}): {type(e).__name__}: {e}",
                         n=n, seed=seed, trial=trial) from e
    head = {"n": int(n), "trial": int(trial), "seed": int(seed)}
    head.update(rec)
    head["wall_time"] = time.perf_counter() - t0
    return head


def run_trials(fn, tasks, threads=None):
    """Map ``fn(n, trial, seed)`` over ``tasks`` on a thread pool, keeping task order."""
    tasks = list(tasks)
    threads = default_threads() if threads is None else int(threads)
    if threads <= 1 or len(tasks) <= 1:
        return [_wrap(fn, *t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda t: _wrap(fn, *t), tasks))


def _grid_tasks(n_grid, trials, seed):
    return [(n, t, trial_seed(seed, n, t)) for n in n_grid for t in range(trials)]


# ---------------------------------------------------------------- convergence


def fixed_mobius_maps(seed, count):
    return [metrics.sample_mobius(derive_seed(seed, "mobius", i)) for i in range(count)]


def _atom_check(spec, roots, child, k):
    """Each atom with N_i > k copies must be a zero of P^(k) of multiplicity exactly N_i - k."""
    ok = True
    for a in spec.atoms:
        N = int(np.count_nonzero(roots == a))
        if N > k and child.multiplicity_at(a) != N - k:
            ok = False
    return ok


def convergence_metrics(roots, k, reference, maps=(), seed=0, measure=None):
    """Metrics of one trial: W1, log^- discrepancies, Gauss-Lucas, degree and atom checks."""
    rs = rootfind.as_rootset(roots)
    child = rootfind.derivative_roots(rs, k, seed=seed)
    rec = {"k": int(k), "w1": metrics.w1_distance(child, reference)}
    diffs = []
    for i, u in enumerate(maps):
        d = metrics.logminus_potential(child, u) - metrics.logminus_potential(reference, u)
        rec[f"logminus_{i}"] = d
        diffs.append(abs(d))
    if diffs:
        rec["logminus_max"] = max(diffs)
    ok, worst = rootfind.gauss_lucas_check(rs, child, GAUSS_LUCAS_TOL)
    rec["hull_excess"] = worst
    rec["gauss_lucas_ok"] = bool(ok)
    rec["degree_ok"] = child.degree == rs.degree - k
    if isinstance(measure, measures.Discrete):
        rec["atoms_ok"] = _atom_check(measure, rs.expanded(), child, k)
    return rec, child


def _reference(spec, size, tseed):
    return measures.sample(spec, size, derive_seed(tseed, "reference"))


def run_convergence(cfg, threads=None, tasks=None):
    """W1 and log-potential distance from the zeros of P^(k) to a fresh sample of the measure."""
    maps = fixed_mobius_maps(cfg.seed, cfg.mobius_maps)

    def trial(n, t, tseed):
        k = cfg.k_for(n)
        roots = measures.sample(cfg.measure, n, derive_seed(tseed, "roots"))
        ref = _reference(cfg.measure, cfg.reference_size or n, tseed)
        rec, _ = convergence_metrics(roots, k, ref, maps, derive_seed(tseed, "aberth"), cfg.measure)
        return rec

    records = run_trials(trial, tasks or _grid_tasks(cfg.n_grid, cfg.trials, cfg.seed), threads)
    extra = {"mobius_maps": [u.to_list() for u in maps],
             "median_w1": {str(n): float(np.median([r["w1"] for r in records if r["n"] == n]))
                           for n in cfg.n_grid}}
    return TrialReport("convergence", cfg.to_dict(), records, extra)


# ---------------------------------------------------------------- anti-concentration


def _sample_off_pole(spec, n, a, tseed):
    """Roots avoiding the evaluation point; returns ``(roots, resamples)``."""
    for attempt in range(RESAMPLE_LIMIT):
        key = derive_seed(tseed, "roots") if attempt == 0 else derive_seed(tseed, "roots", attempt)
        roots = measures.sample(spec, n, key)
        if not np.any(roots == a):
            return roots, attempt
    raise PoleError(f"every one of {RESAMPLE_LIMIT} samples hit the pole a={a}")


def run_anticoncentration(cfg, threads=None, tasks=None):
    """Frequency of log|S_{k,n}(a)| <= -epsilon n with Wilson intervals.

    Per-trial records keep log|S| and log|S| / n so the whole distribution
    is available, not just the event at one epsilon.
    """
    a = cfg.eval_point

    def trial(n, t, tseed):
        k = cfg.k_for(n)
        roots, resampled = _sample_off_pole(cfg.measure, n, a, tseed)
        val = sympoly.log_abs_S(roots, a, k)
        return {"k": k, "log_abs_S": val, "scaled": val / n, "event": bool(val <= -cfg.epsilon * n),
                "resampled": resampled}

    records = run_trials(trial, tasks or _grid_tasks(cfg.n_grid, cfg.trials, cfg.seed), threads)
    summary = []
    for n in cfg.n_grid:
        rows = [r for r in records if r["n"] == n]
        hits = sum(r["event"] for r in rows)
        lo, hi = wilson_interval(hits, len(rows))
        k = cfg.k_for(n)
        summary.append({"n": n, "k": k, "trials": len(rows), "events": hits, "frequency": hits / len(rows),
                        "wilson_low": lo, "wilson_high": hi,
                        "resampled": sum(r["resampled"] for r in rows),
                        "cw_bound": cw_bound(math.exp(-cfg.epsilon * n), k, math.comb(n, k), 2 * k)})
    return TrialReport("anticonc", cfg.to_dict(), records, {"summary": summary, "confidence": CI_LEVEL})


# ---------------------------------------------------------------- counterexample


def counterexample_m(q, k):
    """m = ceil((1 - q)^-k), with q read as the nearest fraction of denominator <= 1e6."""
    qf = Fraction(q).limit_denominator(10**6)
    x = (1 / (1 - qf)) ** int(k)
    m = -(-x.numerator // x.denominator)
    if m > COUNTER_M_CAP:
        raise ScaleError(f"m = ceil((1-q)^-k) = {m} exceeds {COUNTER_M_CAP}")
    return int(m), qf


def counterexample_exact(q, k):
    """``(p_exact, p_zero, m)``.

    p_exact = (1 - (1-q)^k)^m is the probability that every product vanishes;
    p_zero is the exact P(S = 0), which also counts cancelling +-1 products.
    """
    m, qf = counterexample_m(q, k)
    p = float(1 - qf) ** k
    p_exact = math.exp(m * math.log1p(-p))
    N = np.arange(0, m + 1, 2)
    terms = stats.binom.logpmf(N, m, p) + gammaln(N + 1) - 2 * gammaln(N / 2 + 1) - N * math.log(2)
    return p_exact, float(np.exp(logsumexp(terms))), m


def run_counterexample(q, k, trials, seed):
    """Monte Carlo for S = sum_i prod_j Y_ij with P(Y=0)=q, P(Y=+-1)=(1-q)/2.

    Returns a dict with p_exact, p_hat (frequency of S = 0), se and the
    deviation in standard errors, plus the exact P(S = 0) and the frequency
    of the all-products-vanish event that p_exact describes.
    """
    cfg = CounterexampleConfig(float(q), int(k), int(trials), int(seed))
    p_exact, p_zero, m = counterexample_exact(cfg.q, cfg.k)
    qv = float(Fraction(cfg.q).limit_denominator(10**6))
    half = qv + (1 - qv) / 2
    per = max(1, COUNTER_BATCH_DRAWS // (m * cfg.k))
    zero = allzero = 0
    done = b = 0
    while done < cfg.trials:
        size = min(per, cfg.trials - done)
        rng = stream(cfg.seed, "counterexample", b)
        u = rng.random((size, m, cfg.k))
        y = np.where(u < qv, 0, np.where(u < half, 1, -1)).astype(np.int8)
        prods = y.prod(axis=2, dtype=np.int64)
        s = prods.sum(axis=1)
        zero += int(np.count_nonzero(s == 0))
        allzero += int(np.count_nonzero(~prods.any(axis=1)))
        done += size
        b += 1
    n = cfg.trials
    p_hat = zero / n
    se = math.sqrt(p_exact * (1 - p_exact) / n)
    lo, hi = wilson_interval(zero, n)
    a_hat = allzero / n
    return {"q": cfg.q, "k": cfg.k, "m": m, "trials": n, "seed": cfg.seed,
            "p_exact": p_exact, "p_hat": p_hat, "se": se,
            "deviation_se": (p_hat - p_exact) / se if se > 0 else math.inf,
            "wilson_low": lo, "wilson_high": hi,
            "p_zero_exact": p_zero, "deviation_zero_se": (p_hat - p_zero) / math.sqrt(p_zero * (1 - p_zero) / n),
            "all_zero_hat": a_hat,
            "deviation_all_zero_se": (a_hat - p_exact) / se if se > 0 else math.inf}


# ---------------------------------------------------------------- moments


def log_n_r(n, k, r):
    """log N_r with N_r = C(n, r) C(n - r, k - r)^2."""
    return math.log(math.comb(n, r)) + 2 * math.log(math.comb(n - r, k - r))


def moment_prediction(c, sigma2, n, k):
    """Predicted E S, Var S and the leading variance ratio k^2 sigma^2 / (n |c|^2).

    Logs are returned alongside so large n, k do not overflow.
    """
    c = complex(c)
    n, k = int(n), int(k)
    if k == 0:
        return {"mean": 1 + 0j, "log_abs_mean": 0.0, "var": 0.0, "log_var": -math.inf, "ratio_leading": 0.0,
                "ratio_full": 0.0}
    log_c = math.log(abs(c))
    log_mean = k * log_c + math.log(math.comb(n, k))
    if sigma2 > 0:
        logs = [log_n_r(n, k, r) + r * math.log(sigma2) + 2 * (k - r) * log_c for r in range(1, k + 1)]
        log_var = float(logsumexp(logs))
    else:
        log_var = -math.inf
    mean = c**k * math.comb(n, k) if log_mean < 700 else complex(math.nan, math.nan)
    return {"mean": mean, "log_abs_mean": log_mean, "var": math.exp(log_var) if log_var < 700 else math.inf,
            "log_var": log_var, "ratio_leading": k * k * sigma2 / (n * abs(c) ** 2),
            "ratio_full": math.exp(log_var - 2 * log_mean)}


def ratio_identity_error(n, k):
    """Largest relative gap between N_r / N_{r-1} from exact integers and (k-r+1)^2 / (r (n-r+1))."""
    worst = 0.0
    prev = math.comb(n - 0, 0) * math.comb(n, k) ** 2
    for r in range(1, k + 1):
        cur = math.comb(n, r) * math.comb(n - r, k - r) ** 2
        direct = float(Fraction(cur, prev))
        ident = (k - r + 1) ** 2 / (r * (n - r + 1))
        worst = max(worst, abs(direct - ident) / ident)
        prev = cur
    return worst


def run_moments(cfg, threads=None, tasks=None):
    """Monte Carlo mean and variance of S_{k,n}(a) against c^k C(n,k) and the N_r sum."""
    a = cfg.eval_point
    c = measures.cauchy_transform(cfg.measure, a)
    if abs(c) < DEGENERATE_C:
        raise DegenerateError(f"|g(a)| = {abs(c):.3g} < {DEGENERATE_C}: mean of S vanishes at a={a}")
    m2 = measures.second_moment(cfg.measure, a)
    sigma2 = m2 - abs(c) ** 2
    if not math.isfinite(sigma2):
        raise DegenerateError(f"E|Y|^2 is infinite at a={a}")

    def trial(n, t, tseed):
        k = cfg.k_for(n)
        roots, resampled = _sample_off_pole(cfg.measure, n, a, tseed)
        s = sympoly.s_table(roots, a, k)[k].to_complex()
        return {"k": k, "s_re": s.real, "s_im": s.imag, "resampled": resampled}

    records = run_trials(trial, tasks or _grid_tasks(cfg.n_grid, cfg.trials, cfg.seed), threads)
    summary = []
    for n in cfg.n_grid:
        k = cfg.k_for(n)
        pred = moment_prediction(c, sigma2, n, k)
        s = np.array([complex(r["s_re"], r["s_im"]) for r in records if r["n"] == n])
        mean = complex(s.mean())
        var = float(np.mean(np.abs(s - mean) ** 2)) * s.size / max(s.size - 1, 1)
        se = math.sqrt(var / s.size)
        summary.append({
            "n": n, "k": k, "mean_pred_re": pred["mean"].real, "mean_pred_im": pred["mean"].imag,
            "log_abs_mean_pred": pred["log_abs_mean"], "var_pred": pred["var"], "log_var_pred": pred["log_var"],
            "ratio_leading": pred["ratio_leading"], "ratio_full": pred["ratio_full"],
            "mean_re": mean.real, "mean_im": mean.imag, "var_mc": var, "se": se,
            "deviation_se": abs(mean - pred["mean"]) / se if se > 0 else math.inf,
            "log_n_r": [log_n_r(n, k, r) for r in range(k + 1)],
            "ratio_identity_error": ratio_identity_error(n, k)})
    extra = {"c": [c.real, c.imag], "sigma2": sigma2, "summary": summary}
    return TrialReport("moments", cfg.to_dict(), records, extra)


def cw_bound(alpha, k, moment_estimate, q_param, C=1.0):
    """Small-ball bound C q alpha^(1/k) / M^(1/q), evaluated in log space."""
    for name, v in (("alpha", alpha), ("k", k), ("moment_estimate", moment_estimate), ("q_param", q_param),
                    ("C", C)):
        if not v > 0:
            raise ValidationError(f"must be positive, got {v}", name)
    # math.log takes big ints directly, so C(n, k) never passes through a float
    return math.exp(math.log(C * q_param) + math.log(alpha) / k - math.log(moment_estimate) / q_param)


# ---------------------------------------------------------------- perturbation


def _perturbed_roots(cfg, n, tseed):
    alpha = cfg.alpha_rule(n)
    base = measures.sample(cfg.mu, n, derive_seed(tseed, "roots"))
    noise = measures.sample(cfg.nu, n, derive_seed(tseed, "noise"))
    if cfg.split == "random":
        mask = stream(tseed, "labels").random(n) < alpha
    else:
        mask = np.zeros(n, dtype=bool)
        mask[n - int(round(alpha * n)):] = True
    return np.where(mask, noise, base), int(mask.sum())


def run_perturbation(mu, nu=None, alpha_rule=None, k_rule=None, n_grid=None, trials=None, seed=None,
                     threads=None, tasks=None, **kw):
    """Zeros of P, P' and P^(k) for roots from (1 - alpha_n) mu + alpha_n nu.

    Accepts either the individual arguments or a :class:`PerturbationConfig`
    as the first argument. W1 is measured against a sample of ``mu``.
    """
    if isinstance(mu, PerturbationConfig):
        cfg = mu
    else:
        cfg = PerturbationConfig(mu, nu, alpha_rule, k_rule, tuple(n_grid), int(trials), int(seed), **kw)
    scatter = {}

    def trial(n, t, tseed):
        k = cfg.k_rule.checked(n)
        roots, count = _perturbed_roots(cfg, n, tseed)
        rs = rootfind.as_rootset(roots)
        ref = _reference(cfg.mu, cfg.reference_size or n, tseed)
        aseed = derive_seed(tseed, "aberth")
        child = rootfind.derivative_roots(rs, k, seed=aseed)
        first = child if k == 1 else rootfind.derivative_roots(rs, 1, seed=aseed)
        ok_k, worst_k = rootfind.gauss_lucas_check(rs, child, GAUSS_LUCAS_TOL)
        ok_1, worst_1 = rootfind.gauss_lucas_check(rs, first, GAUSS_LUCAS_TOL)
        alpha = cfg.alpha_rule(n)
        delta = cfg.delta if cfg.delta is not None else min(1.0, 4 * alpha)
        if cfg.scatter:
            scatter[(n, t)] = [(0, rs.expanded()), (1, first.expanded()), (k, child.expanded())]
        return {"k": k, "alpha": alpha, "w1": metrics.w1_distance(child, ref), "noise_count": count,
                "below_half_mean": bool(count <= n * alpha / 2), "above_delta": bool(count >= delta * n),
                "hull_excess": max(worst_k, worst_1), "gauss_lucas_ok": bool(ok_k and ok_1),
                "degree_ok": bool(child.degree == n - k and first.degree == n - 1), "zeros_k": child.degree}

    records = run_trials(trial, tasks or _grid_tasks(cfg.n_grid, cfg.trials, cfg.seed), threads)
    summary = []
    for n in cfg.n_grid:
        rows = [r for r in records if r["n"] == n]
        alpha = cfg.alpha_rule(n)
        delta = cfg.delta if cfg.delta is not None else min(1.0, 4 * alpha)
        lo_hits = sum(r["below_half_mean"] for r in rows)
        hi_hits = sum(r["above_delta"] for r in rows)
        upper = (math.e * alpha / delta) ** (delta * n) if alpha > 0 else 0.0
        summary.append({"n": n, "alpha": alpha, "delta": delta, "threshold_low": n * alpha / 2,
                        "threshold_high": delta * n,
                        "freq_below": lo_hits / len(rows), "ci_below": list(wilson_interval(lo_hits, len(rows))),
                        "chernoff_below": math.exp(-n * alpha / 8),
                        "freq_above": hi_hits / len(rows), "ci_above": list(wilson_interval(hi_hits, len(rows))),
                        "chernoff_above": min(1.0, upper)})
    rows = []
    for key in sorted(scatter):
        n, t = key
        for layer, pts in scatter[key]:
            rows.extend({"n": n, "trial": t, "layer": layer, "re": float(z.real), "im": float(z.imag)}
                        for z in pts)
    return TrialReport("perturbation", cfg.to_dict(), records, {"summary": summary},
                       rows if cfg.scatter else None)


def noise_panel_config(panel="left", trials=10, seed=0):
    """Left: 100 circle roots plus 10 roots from the disk D(3, 0.1); right: 110 circle roots. k = 5."""
    circle = measures.UniformCircle(0, 1)
    nu = measures.UniformDisk(3, 0.1)
    count = 10.0 if panel == "left" else 0.0
    if panel not in ("left", "right"):
        raise ValidationError(f"expected 'left' or 'right', got {panel!r}", "panel")
    return PerturbationConfig(circle, nu, AlphaRule("count", count), KRule("fixed", 5), (110,), trials, seed,
                              split="deterministic")


# ---------------------------------------------------------------- Frostman


def run_frostman(spec, sample_size=None, probe_points=None, r_grid=None, seed=None, **kw):
    """Local-dimension curves at probe points; summary is the minimum over radii.

    Accepts a :class:`FrostmanConfig` as the first argument instead.
    """
    if isinstance(spec, FrostmanConfig):
        cfg = spec
    else:
        cfg = FrostmanConfig(spec, int(sample_size), tuple(r_grid), int(seed),
                             None if probe_points is None else tuple(probe_points), **kw)
    samples = measures.sample(cfg.measure, cfg.sample_size, derive_seed(cfg.seed, "frostman"))
    probes = cfg.probes
    if probes is None:
        probes = tuple(measures.sample(cfg.measure, cfg.num_probes, derive_seed(cfg.seed, "probes")))
    records, summary = [], []
    for i, x in enumerate(probes):
        curve = measures.frostman_exponent(samples, x, cfg.r_grid)
        for r, est in curve:
            records.append({"probe": i, "re": x.real, "im": x.imag, "r": r, "estimate": est})
        finite = [e for _, e in curve if math.isfinite(e)]
        low = min(finite) if finite else math.inf
        summary.append({"probe": i, "re": x.real, "im": x.imag, "min_estimate": low,
                        "flag": "positive" if low > cfg.zero_tol else "zero"})
    return TrialReport("frostman", cfg.to_dict(), records, {"summary": summary})


# ---------------------------------------------------------------- Jensen


def run_jensen(cfg, threads=None, tasks=None):
    """Jensen audits over random (roots, Mobius map) pairs; k cycles through ``k_values``."""

    def trial(n, t, tseed):
        k = cfg.k_values[t % len(cfg.k_values)]
        for attempt in range(RESAMPLE_LIMIT):
            s = tseed if attempt == 0 else derive_seed(tseed, "retry", attempt)
            roots = measures.sample(cfg.measure, n, derive_seed(s, "roots"))
            u = metrics.sample_mobius(derive_seed(s, "mobius"))
            try:
                res = metrics.jensen_audit(roots, k, u, cfg.grid_points, seed=derive_seed(s, "aberth"))
            except DegenerateError:
                continue
            rec = {"k": k, "lhs": res["lhs"], "rhs": res["rhs"], "slack": res["slack"],
                   "refinement": res["refinement"], "passed": res["passed"], "resampled": attempt}
            rec.update({f"u{j}": v for j, v in enumerate(u.to_list())})
            return rec
        raise DegenerateError(f"no usable configuration in {RESAMPLE_LIMIT} attempts")

    tasks = tasks or [(cfg.n, t, trial_seed(cfg.seed, cfg.n, t)) for t in range(cfg.cases)]
    records = run_trials(trial, tasks, threads)
    slacks = [r["slack"] for r in records]
    extra = {"min_slack": min(slacks), "all_passed": all(r["passed"] for r in records)}
    return TrialReport("jensen", cfg.to_dict(), records, extra)


# ---------------------------------------------------------------- dispatch


def run(experiment, cfg, threads=None, tasks=None):
    """Run ``experiment`` on a parsed config.

    ``tasks`` optionally replaces the trial list with explicit
    ``(n, trial, trial_seed)`` triples; the counterexample has none.
    """
    if experiment == "convergence":
        return run_convergence(cfg, threads, tasks)
    if experiment == "anticonc":
        return run_anticoncentration(cfg, threads, tasks)
    if experiment == "moments":
        return run_moments(cfg, threads, tasks)
    if experiment == "perturbation":
        return run_perturbation(cfg, threads=threads, tasks=tasks)
    if experiment == "frostman":
        return run_frostman(cfg)
    if experiment == "jensen":
        return run_jensen(cfg, threads, tasks)
    if experiment == "counterexample":
        res = run_counterexample(cfg.q, cfg.k, cfg.trials, cfg.seed)
        return TrialReport("counterexample", cfg.to_dict(), [], res)
    raise ValidationError(f"unknown experiment {experiment!r}", "experiment")


def replay(experiment, cfg, n, tseed, trial=0):
    """Rerun the single trial keyed by ``tseed`` (as printed on failure)."""
    if experiment in ("frostman", "counterexample"):
        raise ValidationError(f"{experiment} has no per-trial replay", "replay")
    n = int(cfg.n) if experiment == "jensen" else int(n)
    if experiment in ("convergence", "anticonc", "moments"):
        cfg = ExperimentConfig.from_dict(dict(cfg.to_dict(), n_grid=[n], trials=1))
    elif experiment == "perturbation":
        cfg = PerturbationConfig.from_dict(dict(cfg.to_dict(), n_grid=[n], trials=1))
    return run(experiment, cfg, threads=1, tasks=[(n, int(trial), int(tseed))])
