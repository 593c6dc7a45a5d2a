"""Point sets, exact distances and synthetic instance generators.

Points are stored as an ``(n, m)`` float64 array normalized so every
coordinate lies in ``[-1/2, 1/2]``.  The distance between two points is the
mean squared coordinate difference, so it always lies in ``[0, 1]``.

All indices are 0-based.  For a reference point ``i`` its ``n - 1``
neighbours are addressed by a *local* index ``j`` in ``0 .. n - 2`` that
skips ``i`` (see :func:`local_to_global`).
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ConfigError, InstanceError, ParseError

FAMILIES = ("uniform-cube", "gaussian-clusters", "binary-hypercube", "line-with-gaps")


def local_to_global(i: int, j: int) -> int:
    """Map neighbour ``j`` of reference point ``i`` to its global index."""
    return j if j < i else j + 1


def global_to_local(i: int, g: int) -> int:
    """Inverse of :func:`local_to_global`; ``g`` must differ from ``i``."""
    if g == i:
        raise ValueError("a point is not its own neighbour")
    return g if g < i else g - 1


def normalize(points: np.ndarray) -> np.ndarray:
    """Shift by the global midrange and divide by the global range.

    A constant array maps to all zeros.  Arrays whose extremes are already
    exactly -1/2 and 1/2 are returned unchanged, which makes the map
    idempotent bit for bit.
    """
    x = np.asarray(points, dtype=np.float64)
    lo, hi = float(x.min()), float(x.max())
    if lo == -0.5 and hi == 0.5:
        return x.copy()
    span = hi - lo
    if span == 0.0:
        return np.zeros_like(x)
    out = (x - lo) / span - 0.5
    return np.clip(out, -0.5, 0.5)


@dataclass(frozen=True, eq=False)
class Dataset:
    """An immutable, normalized point set."""

    points: np.ndarray

    def __post_init__(self):
        x = np.array(self.points, dtype=np.float64, copy=True)
        if x.ndim != 2:
            raise InstanceError("points must be a 2-D array (n, m)")
        n, m = x.shape
        if n < 2:
            raise InstanceError(f"need at least 2 points, got {n}")
        if m < 1:
            raise InstanceError("points need at least one coordinate")
        if not np.all(np.isfinite(x)):
            raise InstanceError("coordinates must be finite")
        if np.abs(x).max() > 0.5:
            raise InstanceError("coordinates must satisfy |x| <= 1/2; call normalize() first")
        x.setflags(write=False)
        object.__setattr__(self, "points", x)

    @classmethod
    def from_raw(cls, points) -> "Dataset":
        """Build a dataset from unnormalized coordinates."""
        x = np.asarray(points, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] < 2:
            raise InstanceError("need at least 2 points")
        if not np.all(np.isfinite(x)):
            raise InstanceError("coordinates must be finite")
        return cls(normalize(x))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def m(self) -> int:
        return self.points.shape[1]

    @cached_property
    def distances(self) -> np.ndarray:
        """Full ``(n, n)`` matrix of exact distances (zero diagonal)."""
        x = self.points
        d = np.empty((self.n, self.n))
        for i in range(self.n):
            d[i] = np.square(x - x[i]).sum(axis=1) / self.m
        d.setflags(write=False)
        return d

    @cached_property
    def local_distances(self) -> np.ndarray:
        """``(n, n-1)`` matrix: row ``i`` holds distances to local neighbours."""
        n = self.n
        mask = ~np.eye(n, dtype=bool)
        out = self.distances[mask].reshape(n, n - 1)
        out.setflags(write=False)
        return out

    @cached_property
    def sorted_local_distances(self) -> np.ndarray:
        out = np.sort(self.local_distances, axis=1, kind="stable")
        out.setflags(write=False)
        return out

    def _check_index(self, i):
        if not 0 <= i < self.n:
            raise IndexError(f"point index {i} out of range [0, {self.n})")

    def _check_rank(self, k):
        if not 1 <= k <= self.n - 1:
            raise ConfigError(f"k={k} out of range [1, {self.n - 1}]")


def exact_distance(ds: Dataset, i: int, j: int) -> float:
    """Mean squared coordinate difference between points ``i`` and ``j``."""
    ds._check_index(i)
    ds._check_index(j)
    if i == j:
        raise ValueError("exact_distance needs two distinct indices")
    return float(np.square(ds.points[i] - ds.points[j]).sum() / ds.m)


def exact_knn_distance(ds: Dataset, i: int, k: int) -> float:
    """Distance from ``i`` to its ``k``-th nearest neighbour (k is 1-based)."""
    ds._check_index(i)
    ds._check_rank(k)
    return float(ds.sorted_local_distances[i, k - 1])


def knn_distances(ds: Dataset, k: int) -> np.ndarray:
    """Exact k-NN distance of every point."""
    ds._check_rank(k)
    return ds.sorted_local_distances[:, k - 1].copy()


def brute_force_mode(ds: Dataset, k: int) -> int:
    """Index of the point with the smallest k-NN distance; lowest index on ties."""
    return int(np.argmin(knn_distances(ds, k)))


# --------------------------------------------------------------------------
# file formats


def read_points(path, format: str | None = None) -> np.ndarray:
    """Raw coordinates of a CSV or raw-binary point file, unnormalized.

    CSV: one point per row, comma separated floats, no header.  Raw binary:
    two little-endian uint64 values ``n`` and ``m`` followed by ``n * m``
    little-endian float64 values in row-major order.
    """
    path = Path(path)
    if format is None:
        format = "raw-binary" if path.suffix in (".bin", ".raw") else "csv"
    if format == "csv":
        x = _read_csv(path)
    elif format in ("raw-binary", "raw", "bin"):
        x = _read_raw(path)
    else:
        raise ConfigError(f"unknown dataset format {format!r}")
    if x.shape[0] < 2:
        raise InstanceError(f"need at least 2 points, got {x.shape[0]}")
    return x


def load_dataset(path, format: str | None = None, normalize_points: bool = True) -> Dataset:
    """Read a point file (see :func:`read_points`) into a dataset.

    With ``normalize_points=False`` the file must already satisfy ``|x| <= 1/2``.
    """
    x = read_points(path, format)
    return Dataset.from_raw(x) if normalize_points else Dataset(x)


def _read_csv(path: Path) -> np.ndarray:
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise ParseError(f"non-numeric value ({exc})", row=lineno) from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise ParseError(f"expected {width} columns, found {len(vals)}", row=lineno)
            if not all(np.isfinite(vals)):
                raise ParseError("non-finite value", row=lineno)
            rows.append(vals)
    if not rows:
        raise InstanceError("dataset file is empty")
    return np.array(rows, dtype=np.float64)


def _read_raw(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if len(data) < 16:
        raise ParseError("raw file shorter than its 16-byte header")
    n, m = struct.unpack("<QQ", data[:16])
    body = np.frombuffer(data, dtype="<f8", offset=16)
    if body.size != n * m:
        raise ParseError(f"header says {n}x{m} values, body holds {body.size}")
    x = body.reshape(int(n), int(m)).astype(np.float64)
    bad = np.flatnonzero(~np.all(np.isfinite(x), axis=1))
    if bad.size:
        raise ParseError("non-finite value", row=int(bad[0]) + 1)
    return x


def save_dataset(ds_or_points, path, format: str = "csv") -> None:
    x = ds_or_points.points if isinstance(ds_or_points, Dataset) else np.asarray(ds_or_points, float)
    path = Path(path)
    if format == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            for row in x:
                writer.writerow([repr(float(v)) for v in row])
    elif format in ("raw-binary", "raw", "bin"):
        n, m = x.shape
        with open(path, "wb") as fh:
            fh.write(struct.pack("<QQ", n, m))
            fh.write(np.ascontiguousarray(x, dtype="<f8").tobytes())
    else:
        raise ConfigError(f"unknown dataset format {format!r}")


# --------------------------------------------------------------------------
# synthetic instances


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a synthetic instance.

    ``group_size`` only affects ``line-with-gaps``: it is the number of near
    neighbours planted around the mode, so the instance is designed for
    ``k == group_size``.
    """

    family: str
    n: int
    m: int
    gap_scale: float = 1.0
    seed: int = 0
    group_size: int = 3
    extra: dict = field(default_factory=dict, compare=False)

    def validate(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.n < 2:
            raise ConfigError("synthetic instances need n >= 2")
        if self.m < 1:
            raise ConfigError("synthetic instances need m >= 1")
        if not self.gap_scale > 0:
            raise ConfigError("gap_scale must be positive")
        if self.family == "line-with-gaps":
            if self.gap_scale > 1:
                raise ConfigError("line-with-gaps needs gap_scale <= 1 (distances are capped at 1)")
            if self.group_size < 1:
                raise ConfigError("group_size must be >= 1")


# The planted layout needs enough dimensions to give every satellite a
# distinct integer number of flipped coordinates.
PLANTED_MIN_DIMS_PER_POINT = 8


def planted_widths(m: int, group_size: int) -> np.ndarray:
    """Flipped-coordinate counts of the satellites around the mode.

    Satellite ``t`` sits at distance ``widths[t] / m`` from the mode; the
    widths rise from 70% to 100% of the largest one, which is ``0.2 m`` at
    unit scale (less when many satellites must share the dimensions).
    """
    g = group_size
    frac = 0.7 + 0.3 * np.arange(g) / max(g - 1, 1)
    top = min(0.2, 0.9 / frac.sum())
    return np.rint(top * frac * m).astype(np.int64)


def planted_layout(n: int, m: int, group_size: int, rng) -> np.ndarray | None:
    """Mode with planted satellites plus far random points, or None when
    ``m`` is too small to realize it.

    Row 0 is the mode, rows ``1..g`` its satellites.  Each satellite flips
    its own disjoint block of the mode's coordinates, so satellite pairs are
    at the sum of their two distances from the mode.  The other points are
    random codes, about 1/2 away from everything; their set coordinates are
    shrunk by a random factor in (0.95, 1] so that no two distances tie.
    """
    g = min(group_size, n - 1)
    widths = planted_widths(m, g)
    if m < PLANTED_MIN_DIMS_PER_POINT * n or widths[0] < 1 or np.any(np.diff(widths) < 1):
        return None
    x = np.full((n, m), -0.5)
    start = 0
    for t, w in enumerate(widths):
        x[1 + t, start:start + w] = 0.5
        start += w
    rest = n - g - 1
    if rest > 0:
        bits = rng.integers(0, 2, size=(rest, m))
        shrink = 1.0 - 0.05 * rng.random((rest, m))
        x[g + 1:] = -0.5 + bits * shrink
    return x


def line_positions(n: int, group_size: int = 3) -> np.ndarray:
    """Unit-span 1-D layout of tight groups separated by wide gaps.

    The first ``group_size + 1`` points form a core: two end points, one
    point at 0.55 of the core span and the rest packed just right of the
    left end.  The remaining points come in groups of ``group_size`` placed
    beyond the core.  Gap widths and intra-group spacings differ per group.
    """
    g = group_size
    core = min(n, g + 1)
    if core == g + 1 and g >= 2:
        inner = [0.02 * (t + 1) / (g - 2) for t in range(g - 2)]
        pos = [0.0] + inner + [0.55, 1.0]
    else:
        pos = list(np.linspace(0.0, 1.0, core) * np.linspace(1.0, 1.15, core))
    left, grp = n - core, 0
    while left > 0:
        size = min(g, left)
        start = pos[-1] + 1.0 + 0.05 * grp
        step = 0.02 * (1.0 + 0.11 * grp)
        pos.extend(start + step * t * (1.0 + 0.13 * t) for t in range(size))
        left -= size
        grp += 1
    out = np.asarray(pos, dtype=np.float64)
    span = out.max() - out.min()
    return (out - out.min()) / span if span > 0 else out - out.min()


def _distinct_levels(levels: np.ndarray, m: int) -> np.ndarray:
    """Nudge sorted integer levels upward so every point sees distinct distances.

    Best effort: when ``m`` is too small to separate the layout, levels are
    clipped to ``m`` and ties may remain.
    """
    out = []
    seen = []  # seen[p] holds the distances already used by point p
    for target in levels:
        lv = max(int(target), out[-1] + 1 if out else 0)
        while lv < m and any(lv - q in s for q, s in zip(out, seen)):
            lv += 1
        lv = min(lv, m)
        for q, s in zip(out, seen):
            s.add(lv - q)
        seen.append({lv - q for q in out})
        out.append(lv)
    return np.asarray(out, dtype=np.int64)


def thermometer(levels: np.ndarray, m: int) -> np.ndarray:
    """Embed integer levels ``0..m`` so that distance equals ``|level gap| / m``."""
    p = np.arange(m)
    return np.where(p[None, :] < np.asarray(levels)[:, None], 0.5, -0.5)


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Deterministically build the dataset described by ``spec``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n, m, c = spec.n, spec.m, float(spec.gap_scale)
    if spec.family == "uniform-cube":
        x = rng.uniform(-0.5, 0.5, size=(n, m))
        return Dataset.from_raw(x)
    if spec.family == "gaussian-clusters":
        n_clusters = int(spec.extra.get("clusters", max(2, min(5, n // 10))))
        centers = rng.uniform(-0.5, 0.5, size=(n_clusters, m))
        labels = rng.integers(0, n_clusters, size=n)
        # clusters differ in spread so that density, and hence the k-NN
        # distance, varies across the set; clipping to the unit box (like
        # saturated pixel intensities) keeps one wide cluster from shrinking
        # every distance through the range normalization
        spread = np.geomspace(0.1, 0.4, n_clusters)[rng.permutation(n_clusters)]
        x = c * centers[labels] + spread[labels, None] * rng.standard_normal((n, m))
        return Dataset.from_raw(np.clip(x, -0.5, 0.5))
    if spec.family == "binary-hypercube":
        x = np.where(rng.integers(0, 2, size=(n, m)) == 1, 0.5, -0.5)
        return Dataset(x)
    x = planted_layout(n, m, spec.group_size, rng)
    if x is None:
        # too few dimensions: fall back to points on a line, embedded so
        # that distance equals the line separation
        t = line_positions(n, spec.group_size)
        levels = _distinct_levels(np.rint(t * max(m - 2 * n, 1)).astype(np.int64), m)
        x = thermometer(levels, m)
    # shrinking coordinates by sqrt(c) multiplies every distance by exactly c
    x = x * math.sqrt(c)
    order = rng.permutation(n)
    return Dataset(x[order])
