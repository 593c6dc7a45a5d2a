"""Instance-dependent query-complexity quantities.

For a reference point with sorted neighbour distances ``d_1 <= ... <= d_{n-1}``
and target rank ``k`` the gap of neighbour ``j`` is

    d_k - d_j                           for j < k
    min(d_k - d_{k-1}, d_{k+1} - d_k)   for j = k   (one-sided at k=1, k=n-1)
    d_j - d_k                           for j > k

and its z-threshold is the smallest sample count whose confidence width is
at most a gap/8.  The k-NN search upper bound is ``3 * sum_j z_j``.  The mode
bound adds, for every non-mode point, the z-threshold of its mode gap
``d^i_k - d^mode_k``.

The lower bound for k-NN identification among arms with strictly increasing
means is

    log(1/(2.4 delta)) * (sum_{a != k} 1/KL(a, k) + 1/KL(k, k*))

where ``k*`` is whichever of ``k-1``, ``k+1`` has the closer mean.

Ranks (``j``, ``k``) in this module are 1-based positions in sorted order,
matching the usual order-statistic notation; point indices stay 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .confidence import BetaSchedule
from .dataset import Dataset, brute_force_mode, knn_distances
from .errors import ConfigError, InstanceError, NonIdentifiableError


@dataclass(frozen=True)
class GapProfile:
    """Gaps of one reference point's neighbours, in ascending-distance order.

    ``order[r]`` is the local neighbour index at sorted position ``r``
    (0-based), ``distances`` the matching exact distances.
    """

    reference: int
    k: int
    gaps: np.ndarray
    distances: np.ndarray
    order: np.ndarray
    mode_gaps: np.ndarray | None = None

    @property
    def identifiable(self) -> bool:
        return bool(np.all(self.gaps > 0))

    @property
    def mus(self) -> tuple:
        """Midpoints between the k-th distance and its two sorted neighbours."""
        return exact_mus(self.distances, self.k)


def sorted_gaps(d: np.ndarray, k: int) -> np.ndarray:
    """Gaps for an ascending distance vector ``d`` and 1-based rank ``k``."""
    d = np.asarray(d, dtype=np.float64)
    nb = d.size
    if not 1 <= k <= nb:
        raise ConfigError(f"rank k={k} must lie in 1..{nb}")
    dk = d[k - 1]
    out = np.abs(d - dk)
    if nb == 1:
        out[0] = math.inf
    elif k == 1:
        out[0] = d[1] - dk
    elif k == nb:
        out[k - 1] = dk - d[k - 2]
    else:
        out[k - 1] = min(dk - d[k - 2], d[k] - dk)
    return out


def gaps(ds: Dataset, i: int, k: int, with_mode: bool = False) -> GapProfile:
    """Gap profile of point ``i``; ``with_mode`` also attaches the mode gaps."""
    ds._check_index(i)
    ds._check_rank(k)
    row = ds.local_distances[i]
    order = np.argsort(row, kind="stable")
    d = row[order]
    mg = mode_gaps(ds, k) if with_mode else None
    return GapProfile(i, k, sorted_gaps(d, k), d, order, mg)


def mode_gaps(ds: Dataset, k: int) -> np.ndarray:
    """``d^i_k - d^mode_k`` for every point (0 at the mode itself)."""
    kd = knn_distances(ds, k)
    return kd - kd[brute_force_mode(ds, k)]


def z_threshold(gap: float, schedule: BetaSchedule) -> int:
    """Smallest ``z >= 1`` with ``schedule(z) <= gap / 8``."""
    if not gap > 0:
        raise NonIdentifiableError(f"gap {gap} is not positive")
    if math.isinf(gap):
        return 1
    target = gap / 8.0
    if schedule(1) <= target:
        return 1
    lo, hi = 1, 2
    while schedule(hi) > target:
        lo, hi = hi, hi * 2
    # invariant: schedule(lo) > target >= schedule(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if schedule(mid) > target:
            lo = mid
        else:
            hi = mid
    return hi


def z_thresholds(profile: GapProfile, schedule: BetaSchedule) -> np.ndarray:
    return np.array([z_threshold(g, schedule) for g in profile.gaps], dtype=np.int64)


def upper_bound_findknn(ds: Dataset, i: int, k: int, schedule: BetaSchedule) -> int:
    """``3 * sum_j z_j`` over the neighbours of point ``i``."""
    prof = gaps(ds, i, k)
    if not prof.identifiable:
        raise NonIdentifiableError(f"point {i} has a zero gap at rank k={k}")
    return 3 * int(z_thresholds(prof, schedule).sum())


def upper_bound_mode(ds: Dataset, k: int, schedule: BetaSchedule) -> int:
    """Sum of the k-NN search bounds plus one z-threshold per mode gap."""
    mg = mode_gaps(ds, k)
    mode = brute_force_mode(ds, k)
    others = np.delete(mg, mode)
    if np.any(others <= 0):
        raise NonIdentifiableError("the mode is not unique")
    search = sum(upper_bound_findknn(ds, i, k, schedule) for i in range(ds.n))
    return search + sum(z_threshold(float(g), schedule) for g in others)


def exact_mus(distances: np.ndarray, k: int) -> tuple:
    """``((d_{k-1} + d_k)/2, (d_k + d_{k+1})/2)``; a missing side is -inf/+inf."""
    d = np.asarray(distances, dtype=np.float64)
    dk = d[k - 1]
    mu1 = (d[k - 2] + dk) / 2 if k >= 2 else -math.inf
    mu2 = (dk + d[k]) / 2 if k < d.size else math.inf
    return mu1, mu2


def bad_event(mean: float, width: float, rank: int, k: int, mus: tuple) -> bool:
    """Whether a neighbour at sorted ``rank`` (1-based) is still "bad".

    A near neighbour is bad while ``mean + 3 w`` exceeds ``mu1``, a far one
    while ``mean - 3 w`` is below ``mu2``, the k-th one if either holds for
    its own side.
    """
    mu1, mu2 = mus
    if rank < k:
        return mean + 3 * width > mu1
    if rank > k:
        return mean - 3 * width < mu2
    return mean - 3 * width < mu1 or mean + 3 * width > mu2


def bad_events(state, profile: GapProfile) -> np.ndarray:
    """Bad-event flags of every neighbour of ``state``, in sorted-exact order."""
    mus = profile.mus
    means = state.means[profile.order]
    widths = state.widths[profile.order]
    return np.array(
        [bad_event(means[r], widths[r], r + 1, profile.k, mus) for r in range(len(profile.order))]
    )


def kl_bernoulli(p: float, q: float) -> float:
    """``p log(p/q) + (1-p) log((1-p)/(1-q))`` for ``p, q`` in (0, 1)."""
    if not (0.0 < p < 1.0 and 0.0 < q < 1.0):
        raise ValueError("Bernoulli parameters must lie strictly inside (0, 1)")
    return p * math.log(p / q) + (1.0 - p) * math.log((1.0 - p) / (1.0 - q))


def kl_gaussian(mu_a: float, mu_b: float, sigma: float) -> float:
    """KL between equal-variance Gaussians: ``(mu_a - mu_b)^2 / (2 sigma^2)``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return (mu_a - mu_b) ** 2 / (2.0 * sigma * sigma)


BERNOULLI = "bernoulli"
GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class InstanceMeans:
    """Arm means (strictly increasing) and their reward distribution."""

    means: tuple
    k: int
    model: str = GAUSSIAN
    sigma: float = 0.25

    def validate(self):
        mu = np.asarray(self.means, dtype=np.float64)
        if mu.size < 2:
            raise InstanceError("need at least two arms")
        if np.any(np.diff(mu) <= 0):
            raise InstanceError("means must be strictly increasing")
        if not 1 <= self.k <= mu.size:
            raise ConfigError(f"rank k={self.k} must lie in 1..{mu.size}")
        if self.model == BERNOULLI:
            if np.any(mu <= 0) or np.any(mu >= 1):
                raise InstanceError("Bernoulli means must lie in (0, 1)")
        elif self.model == GAUSSIAN:
            if not self.sigma > 0:
                raise InstanceError("sigma must be positive")
        else:
            raise ConfigError(f"unknown model {self.model!r}")

    def kl(self, a: int, b: int) -> float:
        """KL between arms ``a`` and ``b`` (1-based ranks)."""
        pa, pb = self.means[a - 1], self.means[b - 1]
        if self.model == BERNOULLI:
            return kl_bernoulli(pa, pb)
        return kl_gaussian(pa, pb, self.sigma)

    def closest_rival(self) -> int:
        """``k*``: the adjacent rank whose mean is closest to arm ``k`` (lower on ties)."""
        k, mu, n = self.k, self.means, len(self.means)
        cands = [a for a in (k - 1, k + 1) if 1 <= a <= n]
        return min(cands, key=lambda a: (abs(mu[a - 1] - mu[k - 1]), a))


def lower_bound_findknn(inst: InstanceMeans, delta: float) -> float:
    """Expected-sample lower bound for identifying the k-th smallest arm."""
    if not 0.0 < delta <= 0.15:
        raise ValueError("delta must lie in (0, 0.15]")
    inst.validate()
    k = inst.k
    total = sum(1.0 / inst.kl(a, k) for a in range(1, len(inst.means) + 1) if a != k)
    total += 1.0 / inst.kl(k, inst.closest_rival())
    return math.log(1.0 / (2.4 * delta)) * total
