"""Adaptive search for the k-th nearest neighbour of one reference point.

Each neighbour pair carries a running mean and a confidence width.  A step
orders the neighbours by running mean, takes the k-th one as the candidate
``b``, and looks at the most ambiguous rivals on either side: ``a1`` (the
largest UCB among the nearer candidates) and ``a2`` (the smallest LCB among
the farther ones).  ``b`` is always sampled; a rival is sampled only while
its interval still overlaps ``b``'s.  The search is done once a step samples
``b`` alone.

Indices are 0-based.  Neighbours of point ``i`` use local indices
``0..n-2`` that skip ``i`` (see :func:`knnmode.dataset.local_to_global`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .confidence import BetaSchedule, PairEstimate
from .dataset import Dataset, knn_distances
from .errors import ConfigError, ContractError
from .oracle import OracleSession

_EMPTY_F1 = np.zeros(0)
_EMPTY_F2 = np.zeros((0, 0))
_EMPTY_I2 = np.zeros((0, 3), dtype=np.int64)


class Workspace:
    """Estimation arrays for every point of a dataset.

    Pair arrays are ``[n, n-1]`` in local neighbour order.  With
    ``monitor=True`` each sample is checked against the exact distances, so
    ``coverage_held`` and ``interval_held`` report whether every confidence
    interval contained its true value throughout the run.
    """

    def __init__(self, ds: Dataset, k: int, monitor: bool = False, trace_rows: int = 0):
        n = ds.n
        nb = n - 1
        self.n = n
        self.k = k
        self.mean = np.zeros((n, nb))
        self.count = np.zeros((n, nb), dtype=np.int64)
        self.width = np.full((n, nb), np.inf)
        self.exact = np.zeros((n, nb), dtype=np.bool_)
        self.found = np.zeros(n, dtype=np.bool_)
        self.cand = np.full(n, -1, dtype=np.int64)
        self.lk = np.full(n, -np.inf)
        self.uk = np.full(n, np.inf)
        self.pq_find = np.zeros(n, dtype=np.int64)
        self.pq_direct = np.zeros(n, dtype=np.int64)
        self.q_found = np.full(n, -1, dtype=np.int64)
        self.stalled = np.zeros(n, dtype=np.bool_)
        self.flags = np.zeros(3, dtype=np.int64)
        if monitor:
            self.dloc = np.ascontiguousarray(ds.local_distances, dtype=np.float64)
            self.dk = np.ascontiguousarray(knn_distances(ds, k), dtype=np.float64)
        else:
            self.dloc, self.dk = _EMPTY_F2, _EMPTY_F1
        self.trace = np.zeros((trace_rows, 3), dtype=np.int64) if trace_rows else _EMPTY_I2
        self.scratch = (np.empty(nb), np.empty(nb), np.empty(nb), np.empty(nb, dtype=np.int64))

    @property
    def st(self) -> tuple:
        return (
            self.mean, self.count, self.width, self.exact, self.found, self.cand,
            self.lk, self.uk, self.pq_find, self.pq_direct, self.q_found, self.stalled,
        )

    @property
    def mon(self) -> tuple:
        return (self.dloc, self.dk, self.flags, self.trace)

    @property
    def coverage_held(self) -> bool:
        return not self.flags[0]

    @property
    def interval_held(self) -> bool:
        return not self.flags[1]

    @property
    def trace_rows(self) -> np.ndarray:
        """Logged samples as rows ``(point, local neighbour, charged)``."""
        return self.trace[: self.flags[2]].copy()


@dataclass(frozen=True)
class StepReport:
    sampled: tuple
    knnfound: bool
    charged: int


class PointState:
    """Search state of one reference point, backed by a :class:`Workspace`."""

    def __init__(self, workspace: Workspace, i: int):
        self.ws = workspace
        self.reference = i

    @property
    def means(self) -> np.ndarray:
        return self.ws.mean[self.reference].copy()

    @property
    def counts(self) -> np.ndarray:
        return self.ws.count[self.reference].copy()

    @property
    def widths(self) -> np.ndarray:
        return self.ws.width[self.reference].copy()

    @property
    def ucb(self) -> np.ndarray:
        return self.ws.mean[self.reference] + self.ws.width[self.reference]

    @property
    def lcb(self) -> np.ndarray:
        return self.ws.mean[self.reference] - self.ws.width[self.reference]

    @property
    def knnfound(self) -> bool:
        return bool(self.ws.found[self.reference])

    @property
    def candidate(self) -> int | None:
        b = int(self.ws.cand[self.reference])
        return b if b >= 0 else None

    @property
    def interval(self) -> tuple:
        i = self.reference
        return float(self.ws.lk[i]), float(self.ws.uk[i])

    @property
    def initialized(self) -> bool:
        return bool(np.all(self.ws.count[self.reference] > 0))

    def estimate(self, j: int) -> PairEstimate:
        i = self.reference
        return PairEstimate(
            float(self.ws.mean[i, j]), int(self.ws.count[i, j]),
            float(self.ws.width[i, j]), bool(self.ws.exact[i, j]),
        )

    @property
    def estimates(self) -> list:
        return [self.estimate(j) for j in range(self.ws.n - 1)]


def _check_k(n: int, k: int):
    if not 1 <= k <= n - 1:
        raise ConfigError(f"rank k={k} must lie in 1..{n - 1}")


def init_point_state(
    ds: Dataset,
    i: int,
    session: OracleSession,
    schedule: BetaSchedule,
    k: int = 1,
    workspace: Workspace | None = None,
) -> PointState:
    """Sample every unsampled neighbour pair of point ``i`` once.

    Reusing a workspace whose point ``i`` is already initialized charges
    nothing.
    """
    ds._check_index(i)
    _check_k(ds.n, k)
    ws = workspace if workspace is not None else Workspace(ds, k)
    K.init_point(ws.st, session.kernel_args, schedule.kernel_params(), ws.mon, ws.scratch, i, k, K.NO_LIMIT)
    return PointState(ws, i)


def select_targets(state: PointState, k: int) -> tuple:
    """Return ``(a1, a2, b)`` as local indices; absent rivals are ``None``."""
    if not state.initialized:
        raise ContractError("every neighbour must be sampled before selecting targets")
    _check_k(state.ws.n, k)
    a1, a2, b = K.select_targets(state.ws.st, state.ws.scratch, state.reference, k)
    return (int(a1) if a1 >= 0 else None, int(a2) if a2 >= 0 else None, int(b))


def stopping_met(state: PointState, k: int) -> tuple:
    """Both separation criteria: ``L[b] > U[a1]`` and ``U[b] < L[a2]``."""
    a1, a2, b = select_targets(state, k)
    u, lo = state.ucb, state.lcb
    sc1 = a1 is None or lo[b] > u[a1]
    sc2 = a2 is None or u[b] < lo[a2]
    return bool(sc1), bool(sc2)


def knn_interval(state: PointState, k: int) -> tuple:
    """(k-th smallest LCB, k-th smallest UCB) over the neighbour estimates."""
    _check_k(state.ws.n, k)
    lo, hi = K.knn_interval(state.ws.st, state.ws.scratch, state.reference, k)
    return float(lo), float(hi)


def find_knn_step(state: PointState, k: int, session: OracleSession, schedule: BetaSchedule) -> StepReport:
    """Sample ``b`` and, while they still overlap it, the rivals ``a1``/``a2``."""
    if state.knnfound:
        raise ContractError("the k-NN of this point is already found; sample its candidate pair directly")
    if not state.initialized:
        raise ContractError("point state is not initialized")
    _check_k(state.ws.n, k)
    a1, a2, b = K.select_targets(state.ws.st, state.ws.scratch, state.reference, k)
    ws = state.ws
    charged, bits = K.find_knn_step(
        ws.st, session.kernel_args, schedule.kernel_params(), ws.mon, ws.scratch, state.reference, k
    )
    sampled = tuple(int(t) for t, bit in ((b, 1), (a1, 2), (a2, 4)) if bits & bit)
    return StepReport(sampled, state.knnfound, int(charged))


@dataclass(frozen=True)
class FindKnnResult:
    candidate: int
    found: bool
    queries: int
    steps: int
    coverage_held: bool
    interval_held: bool


def run_find_knn(
    ds: Dataset,
    i: int,
    k: int,
    session: OracleSession,
    schedule: BetaSchedule,
    max_queries: int | None = None,
    monitor: bool = True,
) -> FindKnnResult:
    """Initialize point ``i`` and step until its k-NN is found.

    ``candidate`` is a local neighbour index.  ``max_queries`` bounds the
    charged queries (a step may overshoot it).
    """
    ds._check_index(i)
    _check_k(ds.n, k)
    ws = Workspace(ds, k, monitor=monitor)
    limit = K.NO_LIMIT if max_queries is None else int(max_queries)
    charged, steps = K.run_find_knn(
        ws.st, session.kernel_args, schedule.kernel_params(), ws.mon, ws.scratch, i, k, limit
    )
    return FindKnnResult(
        candidate=int(ws.cand[i]),
        found=bool(ws.found[i]),
        queries=int(charged),
        steps=int(steps),
        coverage_held=ws.coverage_held,
        interval_held=ws.interval_held,
    )
