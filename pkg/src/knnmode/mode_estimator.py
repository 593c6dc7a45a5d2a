"""Mode estimation: find the point with the smallest k-NN distance.

The adaptive estimator keeps a confidence interval on every point's k-NN
distance.  Each round it takes the two points with the smallest lower
bounds, ``l1`` and ``l2``, and does one unit of work on whichever of the two
has the wider interval: a k-NN search step while that point's k-NN is still
unresolved, otherwise one more sample of the pair with its found k-NN.  It
stops as soon as ``U[l1] < L[l2]`` and returns ``l1``.

In fixed-budget form the same loop runs until the budget is spent and the
point with the smallest k-th running mean is returned.  Two baselines split
the budget evenly across points: ``naive_plus`` runs the k-NN search on each
point in turn, ``random_sampling`` samples uniformly random neighbours.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .confidence import BetaSchedule
from .dataset import Dataset, brute_force_mode
from .errors import ConfigError
from .knn_search import Workspace
from .oracle import OracleSession

STOPPING_RULE = "stopping-rule"
BUDGET = "budget"
SAFETY_CAP = "safety-cap"
_REASONS = {K.STOP_RULE: STOPPING_RULE, K.STOP_BUDGET: BUDGET, K.STOP_SAFETY: SAFETY_CAP}

ADAPTIVE = "adaptive"
NAIVE_PLUS = "naive-plus"
RANDOM_SAMPLING = "random-sampling"
METHODS = (ADAPTIVE, NAIVE_PLUS, RANDOM_SAMPLING)


@dataclass(frozen=True)
class EstimatorConfig:
    """Run parameters.

    ``budget=None`` selects the anytime (delta-true) mode.  ``safety_cap``
    bounds total queries in that mode and defaults to ``10 m n^2``.
    """

    k: int
    schedule: BetaSchedule
    budget: int | None = None
    safety_cap: int | None = None
    monitor: bool = True

    @property
    def delta(self) -> float:
        return self.schedule.delta

    @property
    def fixed_budget(self) -> bool:
        return self.budget is not None

    def validate(self, ds: Dataset):
        if ds.n < 2:
            raise ConfigError("mode estimation needs n >= 2")
        if not 1 <= self.k <= ds.n - 1:
            raise ConfigError(f"rank k={self.k} must lie in 1..{ds.n - 1}")
        if self.schedule.n != ds.n:
            raise ConfigError(f"schedule was built for n={self.schedule.n}, dataset has n={ds.n}")
        if self.budget is not None and self.budget < 0:
            raise ConfigError("budget must be >= 0")
        if self.safety_cap is not None and self.safety_cap < 1:
            raise ConfigError("safety_cap must be positive")

    def cap_for(self, ds: Dataset) -> int:
        return self.safety_cap if self.safety_cap is not None else 10 * ds.m * ds.n * ds.n


@dataclass
class TrialRecord:
    """Outcome of one estimation run.

    Per-point arrays: ``find_queries`` are charged during k-NN search,
    ``direct_queries`` on the found k-NN pair afterwards, and
    ``queries_at_knnfound`` is the search cost when the k-NN was found
    (-1 if never).  ``coverage_held``/``interval_held`` are None when the
    run was not monitored.
    """

    method: str
    returned: int
    truth: int
    total_queries: int
    terminated_by: str
    find_queries: np.ndarray = field(repr=False)
    direct_queries: np.ndarray = field(repr=False)
    queries_at_knnfound: np.ndarray = field(repr=False)
    coverage_held: bool | None = None
    interval_held: bool | None = None
    budget: int | None = None

    @property
    def correct(self) -> bool:
        return self.returned == self.truth

    @property
    def overshoot(self) -> int:
        return 0 if self.budget is None else max(0, self.total_queries - self.budget)

    def summary(self) -> dict:
        """Plain-type view used for serialization."""
        return {
            "method": self.method,
            "returned": int(self.returned),
            "truth": int(self.truth),
            "correct": bool(self.correct),
            "total_queries": int(self.total_queries),
            "terminated_by": self.terminated_by,
            "coverage_held": self.coverage_held,
            "interval_held": self.interval_held,
            "budget": self.budget,
        }


def _record(method, ws: Workspace, session, returned, truth, reason, monitor, budget=None) -> TrialRecord:
    return TrialRecord(
        method=method,
        returned=int(returned),
        truth=int(truth),
        total_queries=session.total_queries,
        terminated_by=reason,
        find_queries=ws.pq_find.copy(),
        direct_queries=ws.pq_direct.copy(),
        queries_at_knnfound=ws.q_found.copy(),
        coverage_held=ws.coverage_held if monitor else None,
        interval_held=ws.interval_held if monitor else None,
        budget=budget,
    )


def _check_session(ds: Dataset, session: OracleSession):
    if session.ds is not ds:
        raise ConfigError("session is bound to a different dataset")
    if session.total_queries:
        raise ConfigError("estimation needs a fresh oracle session")


def _adaptive(ds, config, session, budgets, safety):
    config.validate(ds)
    _check_session(ds, session)
    ws = Workspace(ds, config.k, monitor=config.monitor)
    out = np.full(len(budgets), -1, dtype=np.int64)
    filled = np.zeros(len(budgets), dtype=np.int64)
    reason, l1 = K.adaptive_mode(
        ws.st, session.kernel_args, config.schedule.kernel_params(), ws.mon, ws.scratch,
        config.k, budgets, out, filled, safety,
    )
    return ws, _REASONS[int(reason)], int(l1), out


def estimate_mode(ds: Dataset, config: EstimatorConfig, session: OracleSession) -> TrialRecord:
    """Anytime estimation: run until the stopping rule (or the safety cap) fires."""
    if config.fixed_budget:
        raise ConfigError("config has a budget; use estimate_mode_budget")
    empty = np.zeros(0, dtype=np.int64)
    ws, reason, l1, _ = _adaptive(ds, config, session, empty, config.cap_for(ds))
    return _record(ADAPTIVE, ws, session, l1, brute_force_mode(ds, config.k), reason, config.monitor)


def estimate_mode_budget(ds: Dataset, config: EstimatorConfig, session: OracleSession) -> TrialRecord:
    """Fixed-budget estimation with ``config.budget`` queries."""
    if not config.fixed_budget:
        raise ConfigError("config has no budget")
    picks, rec = estimate_mode_budget_path(ds, config, session, [config.budget])
    return rec


def _check_budgets(budgets) -> np.ndarray:
    b = np.asarray(budgets, dtype=np.int64).reshape(-1)
    if b.size and (b.min() < 0 or np.any(np.diff(b) <= 0)):
        raise ConfigError("budget grid must be nonnegative and strictly increasing")
    return b


def estimate_mode_budget_path(ds: Dataset, config: EstimatorConfig, session: OracleSession, budgets):
    """Answers for a whole increasing budget grid from a single run.

    Entry ``g`` is the output the fixed-budget estimator would give with
    budget ``budgets[g]``: the loop is deterministic given the oracle
    responses, and every pair's responses depend only on its own draw count,
    so a run with a larger budget passes through exactly the states of the
    smaller ones.  Returns ``(picks, record)`` where the record describes the
    run at the largest budget.
    """
    b = _check_budgets(budgets)
    if b.size == 0:
        raise ConfigError("budget grid is empty")
    ws, reason, _, out = _adaptive(ds, config, session, b, K.NO_LIMIT)
    picks = [int(v) for v in out]
    rec = _record(ADAPTIVE, ws, session, picks[-1], brute_force_mode(ds, config.k), reason, config.monitor, int(b[-1]))
    return picks, rec


def _baseline(kernel, method, ds, config, session, budgets):
    config.validate(ds)
    _check_session(ds, session)
    b = _check_budgets(budgets)
    per_point = b // ds.n
    ws = Workspace(ds, config.k, monitor=config.monitor)
    kth = np.zeros((len(b), ds.n))
    kernel(ws.st, session.kernel_args, config.schedule.kernel_params(), ws.mon, ws.scratch, config.k, per_point, kth)
    picks = [int(np.argmin(row)) for row in kth]
    truth = brute_force_mode(ds, config.k)
    rec = _record(method, ws, session, picks[-1] if picks else 0, truth, BUDGET, config.monitor, int(b[-1]) if b.size else 0)
    return picks, rec


def baseline_naive_plus_path(ds: Dataset, config: EstimatorConfig, session: OracleSession, budgets):
    """Naive+ answers over a budget grid (see :func:`estimate_mode_budget_path`)."""
    return _baseline(K.naive_plus, NAIVE_PLUS, ds, config, session, budgets)


def baseline_random_sampling_path(ds: Dataset, config: EstimatorConfig, session: OracleSession, budgets):
    """Random Sampling answers over a budget grid."""
    return _baseline(K.random_sampling, RANDOM_SAMPLING, ds, config, session, budgets)


def baseline_naive_plus(ds: Dataset, config: EstimatorConfig, budget: int, session: OracleSession) -> TrialRecord:
    """Each point gets ``budget // n`` queries, spent on k-NN search steps.

    A point whose k-NN is found early keeps its leftover budget unused.
    """
    return baseline_naive_plus_path(ds, config, session, [budget])[1]


def baseline_random_sampling(ds: Dataset, config: EstimatorConfig, budget: int, session: OracleSession) -> TrialRecord:
    """Each point gets ``budget // n`` queries on uniformly random neighbours."""
    return baseline_random_sampling_path(ds, config, session, [budget])[1]


PATHS = {
    ADAPTIVE: estimate_mode_budget_path,
    NAIVE_PLUS: baseline_naive_plus_path,
    RANDOM_SAMPLING: baseline_random_sampling_path,
}
