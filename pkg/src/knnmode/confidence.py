"""Confidence-width schedules and the running pair estimate.

Two width schedules are provided:

* ``theoretical``: the finite-sample law-of-the-iterated-logarithm width

      beta(t) = sqrt(2 * alpha(t, d') / t)
      alpha(t, d') = log(1/d') + 3 log log(1/d') + 1.5 log(1 + log t)

  with the union-bound risk ``d' = delta / (n (n - 1))``.
* ``empirical``: ``beta(t) = sqrt(c_beta * log(1 + (1 + log t) n / delta) / t)``,
  a tuned heuristic with a free scale ``c_beta``.

All logarithms are natural.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .errors import ConfigError

THEORETICAL = "theoretical"
EMPIRICAL = "empirical"


def _union_risk(n: int, delta: float) -> float:
    return delta / (n * (n - 1))


def _alpha_constant(n: int, delta: float) -> float:
    dp = _union_risk(n, delta)
    if not 0.0 < dp < 1.0 / math.e:
        raise ConfigError(
            f"per-pair risk {dp:.4g} must lie in (0, 1/e) so that log log(1/d') > 0"
        )
    return math.log(1.0 / dp) + 3.0 * math.log(math.log(1.0 / dp))


def beta_theoretical(t: int, n: int, delta: float) -> float:
    """LIL confidence width after ``t >= 1`` samples."""
    if t < 1:
        raise ValueError("the width is undefined before the first sample (t >= 1)")
    if not 0.0 < delta < 1.0:
        raise ConfigError("delta must lie in (0, 1)")
    a = _alpha_constant(n, delta)
    return math.sqrt(2.0 * (a + 1.5 * math.log(1.0 + math.log(t))) / t)


def beta_empirical(t: int, n: int, delta: float, c_beta: float) -> float:
    """Empirical confidence width after ``t >= 1`` samples."""
    if t < 1:
        raise ValueError("the width is undefined before the first sample (t >= 1)")
    if c_beta <= 0:
        raise ConfigError("c_beta must be positive")
    if not 0.0 < delta < 1.0:
        raise ConfigError("delta must lie in (0, 1)")
    return math.sqrt(c_beta * math.log(1.0 + (1.0 + math.log(t)) * n / delta) / t)


@dataclass(frozen=True)
class BetaSchedule:
    """Confidence-width schedule bound to a dataset size and risk level."""

    kind: str
    delta: float
    n: int
    c_beta: float = 0.03

    def __post_init__(self):
        if self.kind not in (THEORETICAL, EMPIRICAL):
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta must lie in (0, 1)")
        if self.n < 2:
            raise ConfigError("schedule needs n >= 2")
        if self.kind == THEORETICAL:
            _alpha_constant(self.n, self.delta)
            if not self.delta < 0.05:
                warnings.warn(
                    f"delta={self.delta} is outside (0, 0.05), where the LIL bound is guaranteed",
                    stacklevel=3,
                )
        elif self.c_beta <= 0:
            raise ConfigError("c_beta must be positive")

    def __call__(self, t: int) -> float:
        if self.kind == THEORETICAL:
            return beta_theoretical(t, self.n, self.delta)
        return beta_empirical(t, self.n, self.delta, self.c_beta)

    def kernel_params(self) -> tuple:
        """Compact ``(kind, a, b)`` form used by the compiled loops."""
        if self.kind == THEORETICAL:
            return (0, _alpha_constant(self.n, self.delta), 0.0)
        return (1, float(self.c_beta), self.n / self.delta)


@dataclass(frozen=True)
class PairEstimate:
    """Running estimate of one pair distance.

    An estimate fed an exact sample (exact oracle or capped fallback) pins
    the mean to that value and keeps zero width from then on.
    """

    mean: float = 0.0
    count: int = 0
    width: float = math.inf
    exact: bool = False

    @property
    def ucb(self) -> float:
        return self.mean + self.width

    @property
    def lcb(self) -> float:
        return self.mean - self.width


def update_pair(est: PairEstimate, sample, schedule: BetaSchedule) -> PairEstimate:
    """Fold one oracle response into ``est``.

    ``sample`` is a :class:`~knnmode.oracle.QuerySample` or a bare float.
    """
    value = float(getattr(sample, "value", sample))
    is_exact = bool(getattr(sample, "exact", False)) or est.exact
    c = est.count + 1
    if is_exact:
        return PairEstimate(mean=value, count=c, width=0.0, exact=True)
    mean = ((c - 1) / c) * est.mean + value / c
    return PairEstimate(mean=mean, count=c, width=schedule(c), exact=False)
