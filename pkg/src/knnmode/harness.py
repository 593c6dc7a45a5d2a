"""Randomized trials, parameter sweeps and result files.

A trial builds a dataset (a synthetic instance, or a random subsample of a
file), runs every requested method on it with a fresh oracle session and
records whether the true mode was returned.  Trial ``t`` draws all of its
seeds from ``(root seed, t)``, so results are reproducible byte for byte
and independent of worker count.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .confidence import EMPIRICAL, THEORETICAL, BetaSchedule
from .dataset import Dataset, SyntheticSpec, generate_synthetic, read_points
from .errors import ConfigError
from .mode_estimator import ADAPTIVE, METHODS, PATHS, EstimatorConfig, estimate_mode
from .oracle import ADDITIVE_NOISE, DIMENSION_SAMPLING, OracleSession, model_name

log = logging.getLogger(__name__)

DELTA_TRUE = "delta-true"
BUDGET_MODE = "budget"


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment.

    Exactly one of ``dataset`` (a file path) and ``synthetic`` (a family
    name) is set.  With ``resample=True`` every trial draws a fresh
    synthetic instance (or a fresh subsample of ``n`` file rows); otherwise
    all trials share one instance and differ only in oracle randomness.
    ``k_fraction``, when set, overrides ``k`` with ``round(k_fraction * n)``.
    """

    dataset: str | None = None
    synthetic: str | None = "gaussian-clusters"
    n: int = 50
    m: int = 64
    gap_scale: float = 1.0
    group_size: int = 3
    resample: bool = True
    model: str = DIMENSION_SAMPLING
    sigma: float = 0.1
    cap: bool = False
    schedule: str = EMPIRICAL
    delta: float = 0.001
    c_beta: float = 0.03
    k: int = 5
    k_fraction: float | None = None
    mode: str = DELTA_TRUE
    budgets: tuple = ()
    methods: tuple = ()
    trials: int = 10
    seed: int = 0
    safety_cap: int | None = None
    normalize_queries: bool = False

    def __post_init__(self):
        object.__setattr__(self, "model", model_name(self.model))
        object.__setattr__(self, "budgets", tuple(int(b) for b in self.budgets))
        object.__setattr__(self, "methods", tuple(self.methods))

    @property
    def rank(self) -> int:
        if self.k_fraction is not None:
            return max(1, int(round(self.k_fraction * self.n)))
        return self.k

    @property
    def active_methods(self) -> tuple:
        if self.methods:
            return self.methods
        return METHODS if self.mode == BUDGET_MODE else (ADAPTIVE,)

    def validate(self):
        if (self.dataset is None) == (self.synthetic is None):
            raise ConfigError("set exactly one of dataset and synthetic")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.n < 2:
            raise ConfigError("n must be >= 2")
        if not 1 <= self.rank <= self.n - 1:
            raise ConfigError(f"rank k={self.rank} must lie in 1..{self.n - 1}")
        if self.mode not in (DELTA_TRUE, BUDGET_MODE):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.schedule not in (THEORETICAL, EMPIRICAL):
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if self.mode == BUDGET_MODE:
            b = np.asarray(self.budgets)
            if b.size == 0:
                raise ConfigError("budget mode needs a budget grid")
            if b.min() < 0 or np.any(np.diff(b) <= 0):
                raise ConfigError("budget grid must be nonnegative and strictly increasing")
        for meth in self.active_methods:
            if meth not in METHODS:
                raise ConfigError(f"unknown method {meth!r}")
            if meth != ADAPTIVE and self.mode != BUDGET_MODE:
                raise ConfigError(f"method {meth} needs budget mode")
        if self.cap and self.model != DIMENSION_SAMPLING:
            raise ConfigError("the per-pair cap applies to dimension sampling only")
        BetaSchedule(self.schedule, self.delta, self.n, self.c_beta)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["budgets"] = list(self.budgets)
        d["methods"] = list(self.methods)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass(frozen=True)
class Row:
    """One aggregate over trials."""

    variable: str
    value: float
    method: str
    budget: int | None
    trials: int
    accuracy: float
    accuracy_se: float
    mean_queries: float
    queries_se: float
    seed: int


ROW_FIELDS = [f.name for f in fields(Row)]


@dataclass
class SweepResult:
    config: dict
    rows: list = field(default_factory=list)
    records: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def rows_for(self, method: str) -> list:
        return [r for r in self.rows if r.method == method]


def trial_seeds(root: int, t: int) -> tuple:
    """(dataset seed, oracle seed) for trial ``t``."""
    state = np.random.SeedSequence([int(root) & ((1 << 64) - 1), t]).generate_state(2, dtype=np.uint64)
    return int(state[0]), int(state[1])


@lru_cache(maxsize=4)
def _file_points(path: str) -> np.ndarray:
    return read_points(path)


def build_dataset(config: ExperimentConfig, data_seed: int) -> Dataset:
    if config.dataset is not None:
        pts = _file_points(config.dataset)
        if config.n > pts.shape[0]:
            raise ConfigError(f"cannot subsample n={config.n} from {pts.shape[0]} rows")
        if config.n == pts.shape[0] and not config.resample:
            return Dataset.from_raw(pts)
        rng = np.random.default_rng(data_seed if config.resample else config.seed)
        idx = np.sort(rng.choice(pts.shape[0], size=config.n, replace=False))
        return Dataset.from_raw(pts[idx])
    seed = data_seed if config.resample else config.seed
    spec = SyntheticSpec(config.synthetic, config.n, config.m, config.gap_scale, seed, config.group_size)
    return generate_synthetic(spec)


def run_trial(config: ExperimentConfig, t: int) -> list:
    """All methods on trial ``t``; one plain dict per method."""
    data_seed, oracle_seed = trial_seeds(config.seed, t)
    ds = build_dataset(config, data_seed)
    k = config.rank
    sched = BetaSchedule(config.schedule, config.delta, ds.n, config.c_beta)
    est = EstimatorConfig(k, sched, safety_cap=config.safety_cap, monitor=False)
    out = []
    for meth in config.active_methods:
        session = OracleSession(ds, config.model, sigma=config.sigma, seed=oracle_seed, cap=config.cap)
        if config.mode == DELTA_TRUE:
            rec = estimate_mode(ds, est, session)
            picks = [rec.returned]
        else:
            picks, rec = PATHS[meth](ds, est, session, config.budgets)
        row = rec.summary()
        row.update(trial=t, picks=picks, m=ds.m, n=ds.n)
        out.append(row)
    return out


def _mean_se(values) -> tuple:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return math.nan, math.nan
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


def aggregate(config: ExperimentConfig, records: list, variable: str = "none", value: float = 0.0) -> list:
    rows = []
    scale = 1.0
    for meth in config.active_methods:
        recs = sorted((r for r in records if r["method"] == meth), key=lambda r: r["trial"])
        if not recs:
            continue
        if config.normalize_queries:
            scale = 1.0 / (recs[0]["m"] * recs[0]["n"] ** 2)
        if config.mode == DELTA_TRUE:
            acc = _mean_se([r["returned"] == r["truth"] for r in recs])
            q = _mean_se([r["total_queries"] * scale for r in recs])
            rows.append(Row(variable, value, meth, None, len(recs), *acc, *q, config.seed))
            continue
        for g, b in enumerate(config.budgets):
            acc = _mean_se([r["picks"][g] == r["truth"] for r in recs])
            rows.append(Row(variable, value, meth, b, len(recs), *acc, b * scale, 0.0, config.seed))
    return rows


def run_trials(config: ExperimentConfig, workers: int = 1, variable: str = "none", value: float = 0.0) -> SweepResult:
    config.validate()
    ts = range(config.trials)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run_trial, [config] * config.trials, ts))
    else:
        chunks = []
        for t in ts:
            chunks.append(run_trial(config, t))
            log.info("trial %d/%d: %s", t + 1, config.trials,
                     " ".join(f"{r['method']}={r['picks'][-1]}/{r['truth']}" for r in chunks[-1]))
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=lambda r: (r["trial"], config.active_methods.index(r["method"])))
    meta = {}
    if config.mode == BUDGET_MODE:
        meta["budget_grid"] = list(config.budgets)
    return SweepResult(config.to_dict(), aggregate(config, records, variable, value), records, meta)


SWEEP_VARIABLES = ("budget", "n", "c_beta")


def sweep(config: ExperimentConfig, variable: str, grid, workers: int = 1) -> SweepResult:
    """One aggregate row (per method, per budget) for each grid value."""
    if variable not in SWEEP_VARIABLES:
        raise ConfigError(f"unknown sweep variable {variable!r}; choose from {SWEEP_VARIABLES}")
    grid = list(grid)
    if variable == "budget":
        res = run_trials(replace(config, mode=BUDGET_MODE, budgets=tuple(grid)), workers)
        res.rows = [replace(r, variable="budget", value=float(r.budget)) for r in res.rows]
        return res
    out = SweepResult(config.to_dict(), metadata={"variable": variable, "grid": grid})
    for v in grid:
        cfg = replace(config, n=int(v)) if variable == "n" else replace(config, c_beta=float(v))
        res = run_trials(cfg, workers, variable, float(v))
        out.rows.extend(res.rows)
        for r in res.records:
            out.records.append(dict(r, sweep_value=float(v)))
    return out


def default_budget_grid(n: int, m: int, points: int = 8, top: int | None = None) -> tuple:
    """Geometric grid from one initialization pass ``n (n-1)`` up to ``top``
    (default ``10 m n^2``)."""
    lo = n * (n - 1)
    hi = top if top is not None else 10 * m * n * n
    grid = np.unique(np.rint(np.geomspace(lo, hi, points)).astype(np.int64))
    return tuple(int(b) for b in grid)


# --------------------------------------------------------------------------
# serialization


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(name, s):
    if name in ("variable", "method"):
        return s
    if name in ("budget",):
        return None if s == "" else int(s)
    if name in ("trials", "seed"):
        return int(s)
    return float(s)


def results_to_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROW_FIELDS)
    for r in result.rows:
        w.writerow([_fmt(getattr(r, f)) for f in ROW_FIELDS])
    return buf.getvalue()


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def results_to_json(result: SweepResult, verbose: bool = False) -> str:
    doc = {
        "config": result.config,
        "metadata": result.metadata,
        "rows": [{f: _json_safe(getattr(r, f)) for f in ROW_FIELDS} for r in result.rows],
    }
    if verbose:
        doc["records"] = result.records
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def emit_results(result: SweepResult, path, format: str = "csv", verbose: bool = False) -> Path:
    """Write ``result`` to ``path``; the bytes depend only on the result."""
    if format == "csv":
        text = results_to_csv(result)
    elif format == "json":
        text = results_to_json(result, verbose)
    else:
        raise ConfigError(f"unknown output format {format!r}")
    p = Path(path)
    with open(p, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return p


def load_results(path, format: str | None = None) -> SweepResult:
    """Parse a file written by :func:`emit_results`."""
    p = Path(path)
    fmt = format or ("json" if p.suffix == ".json" else "csv")
    text = p.read_text(encoding="utf-8")
    if fmt == "json":
        doc = json.loads(text)
        rows = [Row(**{f: (float(v) if isinstance(v, str) and f not in ("variable", "method") else v)
                       for f, v in r.items()}) for r in doc["rows"]]
        return SweepResult(doc["config"], rows, doc.get("records", []), doc.get("metadata", {}))
    reader = csv.DictReader(io.StringIO(text))
    rows = [Row(**{f: _parse(f, rec[f]) for f in ROW_FIELDS}) for rec in reader]
    return SweepResult({}, rows)


# --------------------------------------------------------------------------
# presets


def _fig1(model, c_beta, cap, n, k, trials, m):
    if model == DIMENSION_SAMPLING:
        # gaussian clusters; grid over [0.1, 1] * m n^2, where the methods separate
        data = dict(synthetic="gaussian-clusters")
        lo, hi = 0.1 * m * n * n, m * n * n
    else:
        # additive noise cannot resolve the near-ties inside a dense cluster,
        # so use a planted mode; grid from one to 16 sweeps over all pairs
        data = dict(synthetic="line-with-gaps", group_size=k)
        lo, hi = n * (n - 1), 16 * n * (n - 1)
    grid = np.unique(np.rint(np.geomspace(lo, hi, 8)).astype(np.int64))
    return dict(
        data, n=n, m=m, model=model, sigma=0.1, cap=cap,
        schedule=EMPIRICAL, delta=0.001, c_beta=c_beta, k=k, mode=BUDGET_MODE,
        budgets=tuple(int(b) for b in grid), trials=trials,
    )


PRESETS = {
    "fig1-model1": _fig1(DIMENSION_SAMPLING, 0.03, True, 100, 10, 200, 12288),
    "fig1-model2": _fig1(ADDITIVE_NOISE, 0.01, False, 100, 10, 200, 12288),
    "fig1-model1-desk": _fig1(DIMENSION_SAMPLING, 0.03, True, 50, 5, 100, 64),
    "fig1-model2-desk": _fig1(ADDITIVE_NOISE, 0.01, False, 50, 5, 100, 512),
    "sweep-n": dict(
        synthetic="gaussian-clusters", m=256, model=DIMENSION_SAMPLING, cap=True, schedule=EMPIRICAL,
        delta=0.001, c_beta=0.03, k_fraction=0.1, mode=DELTA_TRUE, trials=50, normalize_queries=True,
    ),
    "sweep-n-desk": dict(
        synthetic="gaussian-clusters", m=64, model=DIMENSION_SAMPLING, cap=True, schedule=EMPIRICAL,
        delta=0.001, c_beta=0.03, k_fraction=0.1, mode=DELTA_TRUE, trials=20, normalize_queries=True,
    ),
    "sweep-cbeta": dict(
        synthetic="gaussian-clusters", n=100, k=10, m=256, model=DIMENSION_SAMPLING, cap=True,
        schedule=EMPIRICAL, delta=0.001, mode=DELTA_TRUE, trials=100,
    ),
    "sweep-cbeta-desk": dict(
        synthetic="gaussian-clusters", n=50, k=5, m=64, model=DIMENSION_SAMPLING, cap=True,
        schedule=EMPIRICAL, delta=0.001, mode=DELTA_TRUE, trials=100,
    ),
}

# sweep variable and grid attached to sweep presets
PRESET_SWEEPS = {
    "sweep-n": ("n", [50, 100, 150, 200]),
    "sweep-n-desk": ("n", [20, 40, 60, 80]),
    "sweep-cbeta": ("c_beta", [0.0005, 0.002, 0.005, 0.01, 0.03]),
    "sweep-cbeta-desk": ("c_beta", [0.0005, 0.002, 0.005, 0.01, 0.03]),
}


def preset(name: str, **overrides) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return ExperimentConfig(**{**PRESETS[name], **overrides})


def run_preset(name: str, workers: int = 1, **overrides) -> SweepResult:
    cfg = preset(name, **overrides)
    if name in PRESET_SWEEPS:
        var, grid = PRESET_SWEEPS[name]
        return sweep(cfg, var, grid, workers)
    return run_trials(cfg, workers)
