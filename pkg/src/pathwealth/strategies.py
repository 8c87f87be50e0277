"""Allocation strategies as causal functionals of the price path.

A strategy is evaluated on a :class:`~pathwealth.paths.Grid`.  Row ``i`` of
``strategy.allocations(grid)`` is the allocation held over the cell
``(t_i, t_{i+1}]``: the strategy's value at time ``t_{i+1}`` on the path
observed up to ``t_i`` (the left-stopped step path at ``t_{i+1}``).  It is
built from running accumulators (prefix scans over the cells), so row ``i``
only ever sees ``values[: i + 1]``.

Allocations are long-only with weights summing to at most one; the
remainder sits in cash.
"""

from __future__ import annotations

from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    IndexOutOfRange,
    InvalidHorizon,
    InvalidParams,
    Ruin,
    StateCorrupt,
    UnknownKind,
)
from .paths import CadlagPath, Grid, dyadic_ladder

ALLOC_ATOL = 1e-12


def growth(A: np.ndarray, grid: Grid) -> np.ndarray:
    """Per-cell relative wealth change ``theta_i . dx_i / x_i``."""
    return np.einsum("kd,kd->k", A, grid.rel)


def log_wealth_curve(A: np.ndarray, grid: Grid) -> np.ndarray:
    """``ln V(t_i) / V(t_0-)`` for allocations ``A`` on ``grid``; shape (K+1,).

    Factors are formed in linear space so a non-positive one is caught
    exactly; logs are summed in extended precision.
    """
    g = growth(A, grid)
    f = 1.0 + g
    bad = np.flatnonzero(~(f > 0))
    if bad.size:
        i = int(bad[0])
        raise Ruin(float(grid.times[i + 1]), float(f[i]))
    out = np.zeros(grid.times.size)
    out[1:] = np.cumsum(np.log1p(g).astype(np.longdouble))
    return out


def check_allocation(A: np.ndarray, atol: float = ALLOC_ATOL) -> bool:
    A = np.asarray(A)
    return bool(np.all(A >= -atol) and np.all(A.sum(axis=-1) <= 1.0 + atol) and np.all(np.isfinite(A)))


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _clipped_cells(grid: Grid, T: float):
    """Cell end points clipped at T, for integrals over [0, s ^ T]."""
    return np.minimum(grid.times[:-1], T), np.minimum(grid.times[1:], T)


def _asset(i, name="i") -> int:
    if isinstance(i, bool) or int(i) != i:
        raise InvalidParams(f"{name} must be an integer asset index")
    return int(i)


class Strategy:
    """Base class.  Subclasses implement :meth:`allocations` and :meth:`params`."""

    kind = "abstract"

    def allocations(self, grid: Grid) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> dict:
        return {}

    def to_spec(self) -> dict:
        return {"kind": self.kind, "params": self.params()}

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({inner})"


class Cash(Strategy):
    kind = "cash"

    def allocations(self, grid):
        return np.zeros((grid.steps, grid.dim))


class SingleStock(Strategy):
    kind = "single_stock"

    def __init__(self, i: int, d: int | None = None):
        self.i = _asset(i)
        if self.i < 1 or (d is not None and self.i > d):
            raise IndexOutOfRange(f"asset index {i} outside 1..{d if d is not None else 'd'}")
        self.d = d

    def params(self):
        return {"i": self.i}

    def allocations(self, grid):
        if self.i > grid.dim:
            raise IndexOutOfRange(f"asset index {self.i} outside 1..{grid.dim}")
        A = np.zeros((grid.steps, grid.dim))
        A[:, self.i - 1] = 1.0
        return A


class MarketIndex(Strategy):
    kind = "market_index"

    def allocations(self, grid):
        p = grid.values[:-1]
        return p / p.sum(axis=1, keepdims=True)


class SimpleAverage(Strategy):
    """Weight ``x_i a / (I/T + x_i a)`` on asset i, ``a = 1 - (t^T)/T``,
    ``I`` the running integral of ``x_i`` on ``[0, t^T]``."""

    kind = "simple_average"

    def __init__(self, i: int, T: float):
        self.i = _asset(i)
        if self.i < 1:
            raise IndexOutOfRange(f"asset index {i} must be >= 1")
        if not float(T) > 0:
            raise InvalidHorizon(f"T must be positive, got {T!r}")
        self.T = float(T)

    def params(self):
        return {"i": self.i, "T": self.T}

    def allocations(self, grid):
        if self.i > grid.dim:
            raise IndexOutOfRange(f"asset index {self.i} outside 1..{grid.dim}")
        x = grid.values[:-1, self.i - 1]
        lo, hi = _clipped_cells(grid, self.T)
        integral = np.cumsum(x * (hi - lo))
        held = x * (1.0 - hi / self.T)
        A = np.zeros((grid.steps, grid.dim))
        A[:, self.i - 1] = held / (integral / self.T + held)
        return A


class ExponentialAverage(Strategy):
    """Weight ``x_i / (x_i + e^{lam t} J)`` with
    ``J = lam * int_0^t x_i(s) e^{-lam s} ds``."""

    kind = "exponential_average"

    def __init__(self, i: int, lam: float):
        self.i = _asset(i)
        if self.i < 1:
            raise IndexOutOfRange(f"asset index {i} must be >= 1")
        if not float(lam) > 0:
            raise InvalidParams(f"lambda must be positive, got {lam!r}")
        self.lam = float(lam)

    def params(self):
        return {"i": self.i, "lam": self.lam}

    def allocations(self, grid):
        if self.i > grid.dim:
            raise IndexOutOfRange(f"asset index {self.i} outside 1..{grid.dim}")
        x = grid.values[:-1, self.i - 1]
        t0, t1 = grid.times[:-1], grid.times[1:]
        # exact integral of the step path against lam e^{-lam s} over each cell
        J = np.cumsum(x * (np.exp(-self.lam * t0) - np.exp(-self.lam * t1)))
        with np.errstate(over="ignore"):
            A = np.zeros((grid.steps, grid.dim))
            A[:, self.i - 1] = x / (x + J * np.exp(self.lam * t1))
        return A


class Softmax(Strategy):
    """Weights ``softmax(L)`` with ``L_i`` the running left-Riemann sum of
    ``dx_i / x_i``."""

    kind = "softmax"

    def allocations(self, grid):
        L = np.zeros((grid.steps, grid.dim))
        if grid.steps > 1:
            L[1:] = np.cumsum(grid.rel[:-1], axis=0)
        return _softmax_rows(L)


def _check_b(b, m: int, closed_sum: bool) -> np.ndarray:
    b = np.asarray(b, dtype=float).reshape(-1)
    if b.size != m:
        raise DimensionMismatch(f"{m} strategies but {b.size} weights")
    if np.any(b < 0) or not np.all(np.isfinite(b)):
        raise InvalidParams("weights must be non-negative")
    total = b.sum()
    if closed_sum and abs(total - 1.0) > 1e-9:
        raise InvalidParams(f"weights must sum to 1, got {total!r}")
    if not closed_sum and total > 1.0 + 1e-12:
        raise InvalidParams(f"weights must sum to at most 1, got {total!r}")
    return b


class ConvexCombination(Strategy):
    """Pointwise ``sum_k b_k theta_k``; the slack ``1 - sum b`` is cash."""

    kind = "convex_combination"

    def __init__(self, strategies: Sequence[Strategy], b):
        self.strategies = list(strategies)
        if not self.strategies:
            raise DimensionMismatch("need at least one strategy")
        self.b = _check_b(b, len(self.strategies), closed_sum=False)

    def params(self):
        return {"strategies": [s.to_spec() for s in self.strategies], "b": self.b.tolist()}

    def allocations(self, grid):
        A = np.zeros((grid.steps, grid.dim))
        for bk, s in zip(self.b, self.strategies):
            A += bk * s.allocations(grid)
        return A


class PortfolioOfPortfolio(Strategy):
    """Time-average of a child's wealth, realised as a self-financing strategy.

    ``wealth`` maps (child allocations, grid) to the child's log-wealth curve;
    it defaults to the package's product recursion.
    """

    kind = "portfolio_of_portfolio"

    def __init__(self, child: Strategy, T: float, wealth: Callable | None = None):
        if not float(T) > 0:
            raise InvalidHorizon(f"T must be positive, got {T!r}")
        self.child = child
        self.T = float(T)
        self.wealth = log_wealth_curve if wealth is None else wealth

    def params(self):
        return {"child": self.child.to_spec(), "T": self.T}

    def allocations(self, grid):
        A = self.child.allocations(grid)
        E = np.exp(np.asarray(self.wealth(A, grid), dtype=float)[:-1])
        lo, hi = _clipped_cells(grid, self.T)
        integral = np.cumsum(E * (hi - lo))
        held = E * (1.0 - hi / self.T)
        return A * (held / (integral / self.T + held))[:, None]


class Truncated(Strategy):
    """The child until T, cash afterwards; its wealth is the child's stopped at T."""

    kind = "truncated"

    def __init__(self, child: Strategy, T: float):
        if not float(T) > 0:
            raise InvalidHorizon(f"T must be positive, got {T!r}")
        self.child = child
        self.T = float(T)

    def params(self):
        return {"child": self.child.to_spec(), "T": self.T}

    def allocations(self, grid):
        A = self.child.allocations(grid)
        return A * (grid.times[1:] <= self.T)[:, None]


class LaissezFaire(Strategy):
    """Wealth-weighted average of child allocations,
    ``sum_k theta_k b_k W_k / sum_k b_k W_k``.

    Child wealths are advanced on the same grid as the aggregate.
    """

    kind = "laissez_faire"

    def __init__(self, children: Sequence[Strategy], b):
        self.children = list(children)
        if not self.children:
            raise DimensionMismatch("need at least one child strategy")
        self.b = _check_b(b, len(self.children), closed_sum=True)

    def params(self):
        return {"children": [c.to_spec() for c in self.children], "b": self.b.tolist()}

    def child_allocations(self, grid) -> list[np.ndarray]:
        return [c.allocations(grid) for c in self.children]

    def mixture_weights(self, grid, child_alloc=None) -> np.ndarray:
        """Per-cell weights ``b_k W_k(t_i) / sum_l b_l W_l(t_i)``, shape (K, m)."""
        child_alloc = self.child_allocations(grid) if child_alloc is None else child_alloc
        logw = np.stack([log_wealth_curve(A, grid)[:-1] for A in child_alloc], axis=1)
        with np.errstate(divide="ignore"):
            logits = logw + np.log(self.b)[None, :]
        return _softmax_rows(logits)

    def allocations(self, grid):
        child_alloc = self.child_allocations(grid)
        w = self.mixture_weights(grid, child_alloc)
        return np.einsum("km,mkd->kd", w, np.stack(child_alloc))


def best_final_vs_time_average(child: Strategy, T: float, b2: float) -> LaissezFaire:
    """Aggregate of the child stopped at T and the child's time-average over [0, T]."""
    b2 = float(b2)
    if not 0.0 <= b2 <= 1.0:
        raise InvalidParams("b2 must lie in [0, 1]")
    return LaissezFaire([Truncated(child, T), PortfolioOfPortfolio(child, T)], [1.0 - b2, b2])


def make_cash() -> Cash:
    return Cash()


def make_single_stock(i: int, d: int | None = None) -> SingleStock:
    return SingleStock(i, d)


def make_market_index() -> MarketIndex:
    return MarketIndex()


def make_simple_average(i: int, T: float) -> SimpleAverage:
    return SimpleAverage(i, T)


def make_exponential_average(i: int, lam: float) -> ExponentialAverage:
    return ExponentialAverage(i, lam)


def make_portfolio_of_portfolio(child: Strategy, T: float, wealth: Callable | None = None) -> PortfolioOfPortfolio:
    return PortfolioOfPortfolio(child, T, wealth)


def make_softmax() -> Softmax:
    return Softmax()


def make_convex_combination(strategies: Sequence[Strategy], b) -> ConvexCombination:
    return ConvexCombination(strategies, b)


def eval_grid(prefix: CadlagPath, t: float) -> Grid:
    """Grid for evaluating at ``t`` given the path stopped at ``t``.

    Step and sampled paths use their knots; linear paths are refined so that
    running integrals are accurate.  A trailing zero-length cell at ``t``
    carries the allocation being asked for.
    """
    if t < 0:
        raise InvalidParams("t must be >= 0")
    later = prefix.times > t
    if np.any(prefix.values[later] != prefix(t)):
        raise StateCorrupt(f"prefix moves after t={t!r}; hand the stopped path")
    times = prefix.times[~later]
    if prefix.interpolation == "linear" and t > 0:
        times = dyadic_ladder(t, include=prefix.times).finest.times
    elif times[-1] < t:
        times = np.append(times, t)
    times = np.append(times, t)
    values = prefix(times)
    if np.any(prefix.x0 != values[0]):
        times = np.concatenate([[0.0], times])
        values = np.vstack([prefix.x0, values])
    return Grid(times, values, prefix.continuous)


def evaluate(strategy: Strategy, t: float, prefix: CadlagPath) -> np.ndarray:
    """Allocation of ``strategy`` at time ``t`` on the stopped path ``prefix``.

    Pass ``stop_left(x, t)`` to get the left evaluation ``theta(t, x_{t-})``.
    """
    return strategy.allocations(eval_grid(prefix, t))[-1]


# ``eval`` is kept as a public alias matching the operation name
eval = evaluate  # noqa: A001


def _get(spec: Mapping[str, Any], key: str, default=None):
    params = spec.get("params") or {}
    if key in params:
        return params[key]
    if key in spec:
        return spec[key]
    if default is not None:
        return default
    raise InvalidParams(f"strategy {spec.get('kind')!r} needs parameter {key!r}")


def from_spec(spec: Mapping[str, Any]) -> Strategy:
    """Build a strategy from ``{kind, params}``; combinations nest."""
    if isinstance(spec, Strategy):
        return spec
    if not isinstance(spec, Mapping) or "kind" not in spec:
        raise InvalidParams(f"strategy spec must be an object with a 'kind', got {spec!r}")
    kind = spec["kind"]
    if kind == "cash":
        return Cash()
    if kind == "single_stock":
        return SingleStock(_get(spec, "i"))
    if kind == "market_index":
        return MarketIndex()
    if kind == "simple_average":
        return SimpleAverage(_get(spec, "i"), _get(spec, "T"))
    if kind == "exponential_average":
        params = spec.get("params") or {}
        lam = params.get("lam", params.get("lambda", spec.get("lam", spec.get("lambda"))))
        if lam is None:
            raise InvalidParams("exponential_average needs parameter 'lam'")
        return ExponentialAverage(_get(spec, "i"), lam)
    if kind == "softmax":
        return Softmax()
    if kind == "portfolio_of_portfolio":
        return PortfolioOfPortfolio(from_spec(_get(spec, "child")), _get(spec, "T"))
    if kind == "truncated":
        return Truncated(from_spec(_get(spec, "child")), _get(spec, "T"))
    if kind == "convex_combination":
        return ConvexCombination([from_spec(s) for s in _get(spec, "strategies")], _get(spec, "b"))
    if kind == "laissez_faire":
        return LaissezFaire([from_spec(s) for s in _get(spec, "children")], _get(spec, "b"))
    if kind == "best_final_vs_time_average":
        return best_final_vs_time_average(from_spec(_get(spec, "child")), _get(spec, "T"), _get(spec, "b2"))
    raise UnknownKind(f"unknown strategy kind {kind!r}")
