"""Positive càdlàg price paths, partitions and refinement ladders.

Paths are finite knot lists with an interpolation tag:

``constant``
    right-continuous step function through the knots; every change of
    value between consecutive knots is a jump.
``linear``
    continuous, linear between knots.
``dense``
    a fine sampling of a continuous path.  Numerically it is handled like
    ``constant`` (only the samples are known), but it is flagged as
    continuous for the checks that distinguish continuous from jump paths.

Beyond its last knot a path is constant, so a path always lives on
``[0, inf)``.  ``x0`` is the value at ``0-``; it defaults to the first knot
value, and a different value encodes a jump at time zero.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    InvalidParams,
    MalformedRow,
    NonMonotoneTime,
    NonPositivePrice,
)

INTERPOLATIONS = ("constant", "linear", "dense")

# relative tolerance / absolute floor for comparisons between ladder levels
LADDER_RTOL = 1e-6
LADDER_ATOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CadlagPath:
    times: np.ndarray
    values: np.ndarray
    interpolation: str = "constant"
    x0: np.ndarray | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or times.size == 0:
            raise InvalidParams("times must be a non-empty 1-d array")
        if values.ndim == 1:
            values = values.reshape(-1, 1) if times.size > 1 or values.size == 1 else values.reshape(1, -1)
        if values.shape[0] != times.size:
            raise InvalidParams(f"{times.size} knot times but {values.shape[0]} knot values")
        if times[0] != 0.0:
            raise InvalidParams("first knot must be at t=0")
        if np.any(np.diff(times) <= 0):
            raise InvalidParams("knot times must be strictly increasing")
        if self.interpolation not in INTERPOLATIONS:
            raise InvalidParams(f"unknown interpolation {self.interpolation!r}")
        x0 = values[0] if self.x0 is None else np.asarray(self.x0, dtype=float).reshape(-1)
        if x0.shape != values.shape[1:]:
            raise InvalidParams("x0 has the wrong dimension")
        if not (np.all(np.isfinite(values)) and np.all(values > 0) and np.all(x0 > 0)):
            raise InvalidParams("path values must be finite and strictly positive")
        object.__setattr__(self, "times", _frozen(times))
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "x0", _frozen(x0))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def continuous(self) -> bool:
        """True for paths tagged as (samplings of) continuous paths without a jump at 0."""
        return self.interpolation in ("linear", "dense") and bool(np.all(self.x0 == self.values[0]))

    def __call__(self, t):
        """x(t), right-continuous; vectorised over ``t``."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise InvalidParams("paths are defined on t >= 0")
        if self.interpolation == "linear":
            out = np.stack([np.interp(t, self.times, self.values[:, j]) for j in range(self.dim)], axis=-1)
        else:
            idx = np.searchsorted(self.times, t, side="right") - 1
            out = self.values[idx]
        return out

    def left(self, t):
        """Left limit x(t-), with x(0-) = x0."""
        t = np.asarray(t, dtype=float)
        if self.interpolation == "linear":
            out = np.array(self(t))
        else:
            idx = np.searchsorted(self.times, t, side="left") - 1
            out = self.values[np.maximum(idx, 0)]
        at_zero = t == 0
        if np.any(at_zero):
            out = np.where(np.expand_dims(at_zero, -1), self.x0, out)
        return out

    def jump(self, t):
        """Jump x(t) - x(t-)."""
        return self(t) - self.left(t)

    def jump_times(self) -> np.ndarray:
        jt = []
        if np.any(self.x0 != self.values[0]):
            jt.append(0.0)
        if self.interpolation != "linear" and self.times.size > 1:
            moved = np.any(self.values[1:] != self.values[:-1], axis=1)
            jt.extend(self.times[1:][moved].tolist())
        return np.array(jt, dtype=float)

    def knots(self) -> list[list[float]]:
        return [[float(t), *map(float, v)] for t, v in zip(self.times, self.values)]

    def to_dict(self) -> dict:
        out = {"dim": self.dim, "interpolation": self.interpolation, "knots": self.knots()}
        if np.any(self.x0 != self.values[0]):
            out["x0"] = [float(v) for v in self.x0]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "CadlagPath":
        try:
            knots = np.asarray(data["knots"], dtype=float)
            dim = int(data["dim"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidParams(f"malformed path document: {exc}") from exc
        if knots.ndim != 2 or knots.shape[1] != dim + 1:
            raise InvalidParams("knots must be rows of [t, v1..vd]")
        return cls(knots[:, 0], knots[:, 1:], data.get("interpolation", "constant"), data.get("x0"))

    @classmethod
    def from_json(cls, text: str) -> "CadlagPath":
        return cls.from_dict(json.loads(text))

    @classmethod
    def constant_path(cls, x0: Sequence[float], horizon: float = 1.0) -> "CadlagPath":
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        return cls([0.0, horizon], np.vstack([x0, x0]), "constant")


def stop(path: CadlagPath, t: float) -> CadlagPath:
    """The path stopped at ``t``: s -> x(s ^ t)."""
    if t < 0:
        raise InvalidParams("stopping time must be >= 0")
    keep = path.times < t
    times = path.times[keep]
    values = path.values[keep]
    if t == 0:
        return CadlagPath([0.0], path(0.0).reshape(1, -1), path.interpolation, path.x0)
    times = np.append(times, t)
    values = np.vstack([values, path(t)])
    return CadlagPath(times, values, path.interpolation, path.x0)


def stop_left(path: CadlagPath, t: float) -> CadlagPath:
    """The path stopped at ``t-``, i.e. with the jump at ``t`` removed."""
    if t < 0:
        raise InvalidParams("stopping time must be >= 0")
    if t == 0:
        return CadlagPath([0.0], path.x0.reshape(1, -1), path.interpolation, path.x0)
    stopped = stop(path, t)
    values = np.array(stopped.values)
    values[-1] = path.left(t)
    return CadlagPath(stopped.times, values, path.interpolation, path.x0)


@dataclass(frozen=True, eq=False)
class Partition:
    times: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise InvalidParams("a partition needs at least two points")
        if times[0] != 0.0:
            raise InvalidParams("partitions start at t=0")
        if np.any(np.diff(times) <= 0):
            raise InvalidParams("partition times must be strictly increasing")
        object.__setattr__(self, "times", _frozen(times))

    @property
    def mesh(self) -> float:
        return float(np.max(np.diff(self.times)))

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def __len__(self) -> int:
        return self.times.size

    @classmethod
    def uniform(cls, horizon: float, cells: int) -> "Partition":
        return cls(np.linspace(0.0, horizon, cells + 1))


@dataclass(frozen=True, eq=False)
class RefinementLadder:
    levels: tuple[Partition, ...]
    rule: str = "dyadic"

    def __post_init__(self):
        levels = tuple(self.levels)
        if not levels:
            raise InvalidParams("a ladder needs at least one level")
        if self.rule not in ("dyadic", "custom"):
            raise InvalidParams(f"unknown refinement rule {self.rule!r}")
        horizon = levels[0].horizon
        for a, b in zip(levels, levels[1:]):
            if not b.mesh < a.mesh:
                raise InvalidParams("ladder meshes must be strictly decreasing")
        if any(p.horizon != horizon for p in levels):
            raise InvalidParams("every ladder level must cover the same horizon")
        object.__setattr__(self, "levels", levels)

    @property
    def finest(self) -> Partition:
        return self.levels[-1]

    @property
    def horizon(self) -> float:
        return self.levels[0].horizon

    def __len__(self) -> int:
        return len(self.levels)

    def __iter__(self):
        return iter(self.levels)


def _truncate(levels: list[np.ndarray], rule: str) -> RefinementLadder:
    kept = [levels[0]]
    for lv in levels[1:]:
        if np.max(np.diff(lv)) < np.max(np.diff(kept[-1])):
            kept.append(lv)
    return RefinementLadder(tuple(Partition(lv) for lv in kept), rule)


def dyadic_ladder(
    horizon: float,
    base_cells: int = 16,
    max_levels: int = 8,
    include: Iterable[float] | None = None,
) -> RefinementLadder:
    """Dyadic refinements of a uniform base grid.

    Levels are added until the mesh is at most ``2**-20 * horizon`` or
    ``max_levels`` levels exist.  Times in ``include`` (e.g. the jump times
    of a step path) are merged into every level.
    """
    if horizon <= 0:
        raise InvalidParams("horizon must be positive")
    extra = np.array([] if include is None else list(include), dtype=float)
    extra = extra[(extra > 0) & (extra < horizon)]
    levels = []
    cells = base_cells
    while len(levels) < max_levels:
        lv = np.union1d(np.linspace(0.0, horizon, cells + 1), extra)
        levels.append(lv)
        if horizon / cells <= 2.0**-20 * horizon:
            break
        cells *= 2
    return _truncate(levels, "dyadic" if extra.size == 0 else "custom")


def sample_ladder(times: np.ndarray, max_levels: int = 8) -> RefinementLadder:
    """Ladder of nested subsamples (strides 2**j) of a sampling grid."""
    times = np.asarray(times, dtype=float)
    levels = []
    for j in reversed(range(max_levels)):
        stride = 2**j
        if stride >= times.size - 1 and j > 0:
            continue
        lv = times[::stride]
        if lv[-1] != times[-1]:
            lv = np.append(lv, times[-1])
        levels.append(lv)
    return _truncate(levels, "custom")


def default_ladder(path: CadlagPath, horizon: float | None = None, max_levels: int = 8) -> RefinementLadder:
    """The ladder used when none is given: knot subsamples for dense paths,
    dyadic grids merged with the knots otherwise."""
    horizon = path.horizon if horizon is None else horizon
    if horizon <= 0:
        raise InvalidParams("cannot build a ladder on an empty horizon")
    if path.interpolation == "dense" and horizon == path.horizon:
        return sample_ladder(path.times, max_levels)
    return dyadic_ladder(horizon, max_levels=max_levels, include=path.times)


def as_ladder(path: CadlagPath, ladder) -> RefinementLadder:
    if ladder is None:
        return default_ladder(path)
    if isinstance(ladder, Partition):
        return RefinementLadder((ladder,), "custom")
    return ladder


@dataclass(frozen=True, eq=False)
class Grid:
    """A path observed on a partition: the knots of its left-point step
    approximation ``sum_i x(t_i) 1[t_i, t_{i+1})``.

    Cell ``i`` is ``(t_i, t_{i+1}]``; the only price move inside it is the
    increment ``x(t_{i+1}) - x(t_i)`` at its right end.  A leading
    zero-length cell carries a jump at time 0 when ``x(0-) != x(0)``.
    """

    times: np.ndarray
    values: np.ndarray
    continuous: bool = False

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if times.ndim != 1 or values.shape[0] != times.size:
            raise InvalidParams("grid times and values disagree in length")
        if np.any(np.diff(times) < 0):
            raise InvalidParams("grid times must be non-decreasing")
        object.__setattr__(self, "times", _frozen(times))
        object.__setattr__(self, "values", _frozen(values))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def steps(self) -> int:
        return self.times.size - 1

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @cached_property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)

    @cached_property
    def rel(self) -> np.ndarray:
        """Relative increments (x(t_{i+1}) - x(t_i)) / x(t_i), shape (K, d)."""
        return np.diff(self.values, axis=0) / self.values[:-1]

    def prefix(self, k: int) -> "Grid":
        """The grid up to and including point ``k``."""
        return Grid(self.times[: k + 1], self.values[: k + 1], self.continuous)


def discretize(path: CadlagPath, partition: Partition | np.ndarray) -> Grid:
    times = partition.times if isinstance(partition, Partition) else np.asarray(partition, dtype=float)
    values = path(times)
    if np.any(path.x0 != values[0]):
        times = np.concatenate([[0.0], times])
        values = np.vstack([path.x0, values])
    return Grid(times, values, path.continuous)


def knot_grid(path: CadlagPath) -> Grid:
    return discretize(path, path.times if path.times.size > 1 else np.array([0.0]))


def piecewise_approx(path: CadlagPath, partition: Partition) -> CadlagPath:
    """Step approximation taking the value x(t_{i+1}) on [t_i, t_{i+1}).

    The result keeps ``x(0-)`` and is constant at ``x(t_k)`` from the last
    grid point on.  Jumps inside a cell move to the cell's left endpoint.
    """
    times = partition.times
    vals = path(times)
    step_values = np.vstack([vals[1:], vals[-1:]])
    return CadlagPath(times, step_values, "constant", path.x0)


def step_approx(path: CadlagPath, partition: Partition) -> CadlagPath:
    """Left-point step approximation taking x(t_i) on [t_i, t_{i+1}); this is
    the path the wealth engine actually trades on."""
    return CadlagPath(partition.times, path(partition.times), "constant", path.x0)


def _on_coarse(fine_times, fine_vals, coarse_times):
    idx = np.searchsorted(fine_times, coarse_times, side="right") - 1
    return fine_vals[idx]


def level_deviation(fine_times, fine_vals, coarse_times, coarse_vals) -> float:
    """Max abs difference of two step curves at the coarse grid's times."""
    return float(np.max(np.abs(_on_coarse(fine_times, fine_vals, coarse_times) - coarse_vals)))


def within_tolerance(deviation: float, scale: float) -> bool:
    return deviation <= max(LADDER_RTOL * abs(scale), LADDER_ATOL)


@dataclass
class QVResult:
    times: np.ndarray
    values: np.ndarray
    level_mesh: list[float]
    deviations: list[float]
    converged: bool

    def at(self, t: float) -> np.ndarray:
        idx = np.searchsorted(self.times, t, side="right") - 1
        return self.values[max(idx, 0)]


def _qv_curve(grid: Grid) -> np.ndarray:
    inc = np.diff(grid.values, axis=0)
    outer = inc[:, :, None] * inc[:, None, :]
    out = np.zeros((grid.times.size, grid.dim, grid.dim))
    out[1:] = np.cumsum(outer, axis=0)
    return out


def _resolves_all_jumps(path: CadlagPath, partition: Partition) -> bool:
    return path.interpolation == "constant" and bool(np.all(np.isin(path.jump_times()[path.jump_times() > 0],
                                                                    partition.times)))


def quadratic_variation(path: CadlagPath, ladder: RefinementLadder | None = None) -> QVResult:
    """Cumulative sums of increment outer products along each ladder level.

    The curve at t_k holds the sum over cells ending at or before t_k; the
    returned curve is the finest level's.  ``converged`` is a report, not a
    guarantee: it compares the two finest levels at the coarser level's times.
    """
    ladder = as_ladder(path, ladder)
    if ladder.horizon > path.horizon + 1e-12 and path.interpolation == "dense":
        raise InvalidParams("ladder extends beyond the sampled horizon")
    curves = []
    for p in ladder:
        g = discretize(path, p)
        curves.append((g.times, _qv_curve(g)))
    devs = [level_deviation(f[0], f[1], c[0], c[1]) for c, f in zip(curves, curves[1:])]
    times, values = curves[-1]
    scale = float(np.max(np.abs(values))) if values.size else 0.0
    if devs:
        converged = within_tolerance(devs[-1], scale)
    else:
        converged = _resolves_all_jumps(path, ladder.finest)
    return QVResult(times, values, [p.mesh for p in ladder], devs, converged)


@dataclass(frozen=True)
class OmegaConstraint:
    """Relative jump bounds -delta_minus < dx/x(t-) < delta_plus."""

    delta_minus: float
    delta_plus: float

    def __post_init__(self):
        if not 0.0 < self.delta_minus < 1.0:
            raise InvalidParams("delta_minus must lie in (0, 1)")
        if not self.delta_plus > 0.0:
            raise InvalidParams("delta_plus must be positive")


@dataclass
class OmegaReport:
    ok: bool
    min_ratio: float
    max_ratio: float
    worst_time: float | None

    def __bool__(self) -> bool:
        return self.ok


def relative_jumps(path: CadlagPath) -> tuple[np.ndarray, np.ndarray]:
    """(times, ratios) of all jumps; ratios are componentwise dx/x(t-)."""
    jt = path.jump_times()
    if jt.size == 0:
        return jt, np.zeros((0, path.dim))
    return jt, path.jump(jt) / path.left(jt)


def check_omega(path: CadlagPath, c: OmegaConstraint) -> OmegaReport:
    times, ratios = relative_jumps(path)
    if ratios.size == 0:
        return OmegaReport(True, 0.0, 0.0, None)
    lo, hi = float(ratios.min()), float(ratios.max())
    ok = lo > -c.delta_minus and hi < c.delta_plus
    # worst = largest violation of either bound, measured as a fraction of it
    score = np.maximum(-ratios / c.delta_minus, ratios / c.delta_plus).max(axis=1)
    worst = float(times[int(np.argmax(score))])
    return OmegaReport(ok, lo, hi, worst)


def ingest_csv(source, interpolation: str = "constant") -> CadlagPath:
    """Read ``time, price_1, ..., price_d`` rows into a step path.

    ``source`` is a filename, a file object, or CSV text containing a newline.
    A non-numeric first row is taken as a header.  Times are shifted so the
    first sample sits at t=0.
    """
    if hasattr(source, "read"):
        text = source.read()
    elif isinstance(source, (str, os.PathLike)) and "\n" not in str(source):
        with open(source, newline="") as fh:
            text = fh.read()
    else:
        text = str(source)
    rows = []
    width = None
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            nums = [float(c) for c in row]
        except ValueError:
            if not rows and lineno == 1:
                continue
            raise MalformedRow(f"non-numeric field in {row!r}", lineno) from None
        if len(nums) < 2:
            raise MalformedRow("need a time and at least one price", lineno)
        if width is None:
            width = len(nums)
        elif len(nums) != width:
            raise MalformedRow(f"expected {width} fields, got {len(nums)}", lineno)
        if not all(np.isfinite(nums)):
            raise MalformedRow("non-finite value", lineno)
        if any(p <= 0 for p in nums[1:]):
            raise NonPositivePrice(f"non-positive price in {row!r}", lineno)
        if rows and nums[0] <= rows[-1][1][0]:
            raise NonMonotoneTime(f"time {nums[0]!r} does not increase", lineno)
        rows.append((lineno, nums))
    if not rows:
        raise MalformedRow("no data rows", None)
    data = np.array([r[1] for r in rows])
    return CadlagPath(data[:, 0] - data[0, 0], data[:, 1:], interpolation)


def path_to_csv(path: CadlagPath) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time"] + [f"x{j + 1}" for j in range(path.dim)])
    for t, v in zip(path.times, path.values):
        w.writerow([repr(float(t))] + [repr(float(a)) for a in v])
    return buf.getvalue()
