"""Noisy distance oracles with per-pair query accounting.

Three response models are supported:

* ``dimension-sampling``: the squared coordinate gap along one dimension
  drawn uniformly at random (with replacement).  Its mean is the exact
  distance.  Optionally capped: once a pair has been charged ``m - 1``
  queries, the next query sweeps every dimension, charges ``m`` more and
  resolves the pair, after which it is answered exactly at no cost.
* ``additive-noise``: the exact distance plus Gaussian noise of scale sigma.
* ``exact``: the exact distance, one charged query per call.

Randomness is counter based: the response to the ``t``-th query of ordered
pair ``(i, j)`` depends only on ``(seed, i, j, t)``, so the order in which
pairs are queried never changes any pair's sample sequence.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .dataset import Dataset
from .errors import ConfigError, ContractError

DIMENSION_SAMPLING = "dimension-sampling"
ADDITIVE_NOISE = "additive-noise"
EXACT = "exact"

_MODEL_CODES = {DIMENSION_SAMPLING: K.MODEL_DIMENSION, ADDITIVE_NOISE: K.MODEL_ADDITIVE, EXACT: K.MODEL_EXACT}
_MODEL_ALIASES = {"1": DIMENSION_SAMPLING, "2": ADDITIVE_NOISE, 1: DIMENSION_SAMPLING, 2: ADDITIVE_NOISE}

_MASK64 = (1 << 64) - 1


def model_name(model) -> str:
    """Canonical model name; accepts ``1``/``2`` as shorthands."""
    name = _MODEL_ALIASES.get(model, model)
    if name not in _MODEL_CODES:
        raise ConfigError(f"unknown oracle model {model!r}")
    return name


def seed_bits(seed: int) -> int:
    """64-bit seed reinterpreted as a signed integer for int64 storage."""
    s = int(seed) & _MASK64
    return s - (1 << 64) if s >= (1 << 63) else s


@dataclass(frozen=True)
class QuerySample:
    value: float
    pair: tuple
    exact: bool = False
    charged: int = 1


@dataclass(eq=False)
class OracleSession:
    """Oracle state for one estimation run over one dataset.

    Counters are kept per ordered pair of global indices; ``total_queries``
    is always their sum.
    """

    ds: Dataset
    model: str = DIMENSION_SAMPLING
    sigma: float = 0.0
    seed: int = 0
    cap: bool = False
    _arrays: tuple = field(init=False, repr=False)

    def __post_init__(self):
        self.model = model_name(self.model)
        if self.sigma < 0:
            raise ConfigError("sigma must be nonnegative")
        if self.model == ADDITIVE_NOISE and self.sigma > 0.25:
            warnings.warn(f"sigma={self.sigma} exceeds 1/4; the confidence widths may not cover", stacklevel=2)
        if self.cap and self.model != DIMENSION_SAMPLING:
            raise ConfigError("the per-pair cap applies to dimension sampling only")
        n, m = self.ds.n, self.ds.m
        x = np.array(self.ds.points, dtype=np.float64, order="C")
        dist = np.array(self.ds.distances, dtype=np.float64, order="C")
        cfg = np.array([_MODEL_CODES[self.model], int(self.cap), seed_bits(self.seed), m], dtype=np.int64)
        self._arrays = (
            x,
            dist,
            np.zeros((n, n), dtype=np.int64),
            np.zeros((n, n), dtype=np.int64),
            np.zeros((n, n), dtype=np.bool_),
            np.zeros(1, dtype=np.int64),
            cfg,
            np.array([float(self.sigma)]),
        )

    @property
    def kernel_args(self) -> tuple:
        return self._arrays

    @property
    def total_queries(self) -> int:
        return int(self._arrays[5][0])

    @property
    def pair_queries(self) -> np.ndarray:
        """Charged queries per ordered pair, indexed by global indices."""
        return self._arrays[2].copy()

    @property
    def resolved(self) -> np.ndarray:
        return self._arrays[4].copy()

    def pair_count(self, i: int, j: int) -> int:
        return int(self._arrays[2][i, j])


def _check_pair(session: OracleSession, ds: Dataset, i: int, j: int):
    if ds is not session.ds:
        raise ContractError("session is bound to a different dataset")
    ds._check_index(i)
    ds._check_index(j)
    if i == j:
        raise ValueError("a point cannot be queried against itself")


def query(session: OracleSession, ds: Dataset, i: int, j: int) -> QuerySample:
    """One oracle call on ordered pair (i, j) using the session's model."""
    _check_pair(session, ds, i, j)
    value, exact, charged = K.query(session.kernel_args, i, j)
    return QuerySample(float(value), (i, j), bool(exact), int(charged))


def query_model1(session: OracleSession, ds: Dataset, i: int, j: int) -> QuerySample:
    if session.model != DIMENSION_SAMPLING:
        raise ContractError(f"session model is {session.model}, not {DIMENSION_SAMPLING}")
    return query(session, ds, i, j)


def query_model2(session: OracleSession, ds: Dataset, i: int, j: int) -> QuerySample:
    if session.model != ADDITIVE_NOISE:
        raise ContractError(f"session model is {session.model}, not {ADDITIVE_NOISE}")
    return query(session, ds, i, j)


def query_capped(session: OracleSession, ds: Dataset, i: int, j: int) -> QuerySample:
    """Dimension-sampling query honouring the session's cap; a session
    without a cap behaves exactly like :func:`query_model1`."""
    return query_model1(session, ds, i, j)
