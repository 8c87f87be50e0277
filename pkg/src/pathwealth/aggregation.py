"""Wealth-weighted aggregation of strategies and its tracking guarantees.

The aggregate ``sum_k theta_k b_k W_k / sum_k b_k W_k`` has wealth exactly
``sum_k b_k W_k``, hence ``1 <= max_k W_k / W_hat <= max_k 1 / b_k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from . import simplex
from .errors import BoundViolation, DimensionMismatch, EmptyScenarioSet, InvalidParams
from .paths import CadlagPath, Grid, Partition, default_ladder, discretize
from .strategies import (
    LaissezFaire,
    Strategy,
    best_final_vs_time_average,
    log_wealth_curve,
)

BOUND_RTOL = 1e-12


def laissez_faire(strategies: Sequence[Strategy], b) -> LaissezFaire:
    return LaissezFaire(strategies, b)


@dataclass
class AggregateRun:
    """Aggregate and child log-wealths advanced on one shared grid."""

    times: np.ndarray
    log_w_hat: np.ndarray
    child_log: np.ndarray  # (m, K+1)
    b: np.ndarray

    @property
    def w_hat(self) -> np.ndarray:
        return np.exp(self.log_w_hat)

    @property
    def child_wealths(self) -> np.ndarray:
        return np.exp(self.child_log)


def run_aggregate(agg: LaissezFaire, grid: Grid) -> AggregateRun:
    child_alloc = agg.child_allocations(grid)
    child_log = np.stack([log_wealth_curve(A, grid) for A in child_alloc])
    w = agg.mixture_weights(grid, child_alloc)
    A = np.einsum("km,mkd->kd", w, np.stack(child_alloc))
    return AggregateRun(grid.times, log_wealth_curve(A, grid), child_log, agg.b)


def run_aggregate_on_path(agg: LaissezFaire, path: CadlagPath, partition: Partition | None = None) -> AggregateRun:
    p = partition if partition is not None else default_ladder(path).finest
    return run_aggregate(agg, discretize(path, p))


def verify_mixture(w_hat, child_wealths, b) -> float:
    """``max_t |W_hat - sum_k b_k W_k| / sum_k b_k W_k``."""
    child = np.atleast_2d(np.asarray(child_wealths, dtype=float))
    b = np.asarray(b, dtype=float)
    if child.shape[0] != b.size:
        raise DimensionMismatch(f"{child.shape[0]} child curves but {b.size} weights")
    mix = b @ child
    return float(np.max(np.abs(np.asarray(w_hat, dtype=float) - mix) / mix))


@dataclass
class TrackingReport:
    w_star: np.ndarray
    ratio: np.ndarray
    bound: float
    log_ratio_final: float
    rate: float | None
    ok: bool

    def to_dict(self) -> dict:
        return {
            "bound": self.bound,
            "max_ratio": float(self.ratio.max()),
            "min_ratio": float(self.ratio.min()),
            "log_ratio_final": self.log_ratio_final,
            "rate": self.rate,
            "ok": self.ok,
        }


def tracking_report(child_wealths, w_hat, b, horizon: float | None = None) -> TrackingReport:
    """Check ``1 <= W*/W_hat <= max_k 1/b_k`` pointwise, with ``W* = max_k W_k``.

    Raises :class:`BoundViolation` if the bound fails beyond rounding.
    """
    b = np.asarray(b, dtype=float)
    if np.any(b <= 0):
        raise InvalidParams("tracking bounds need strictly positive weights")
    child = np.atleast_2d(np.asarray(child_wealths, dtype=float))
    w_hat = np.asarray(w_hat, dtype=float)
    w_star = child.max(axis=0)
    ratio = w_star / w_hat
    bound = float(np.max(1.0 / b))
    lo_bad = ratio < 1.0 - BOUND_RTOL
    hi_bad = ratio > bound * (1.0 + BOUND_RTOL)
    if lo_bad.any() or hi_bad.any():
        i = int(np.flatnonzero(lo_bad | hi_bad)[0])
        raise BoundViolation(f"W*/W_hat = {ratio[i]!r} outside [1, {bound!r}] at index {i}")
    log_final = float(np.log(ratio[-1]))
    rate = log_final / horizon if horizon else None
    return TrackingReport(w_star, ratio, bound, log_final, rate, True)


@dataclass
class MinimaxResult:
    b: np.ndarray
    value: float
    scenario_ratios: np.ndarray
    terminal_wealths: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {"b": self.b.tolist(), "value": self.value, "scenario_ratios": self.scenario_ratios.tolist()}


def terminal_wealths(strategies: Sequence[Strategy], scenarios: Sequence[CadlagPath]) -> np.ndarray:
    """Terminal child wealths, shape (S, m), each on its path's default finest grid."""
    rows = []
    for path in scenarios:
        grid = discretize(path, default_ladder(path).finest)
        rows.append([np.exp(log_wealth_curve(s.allocations(grid), grid)[-1]) for s in strategies])
    return np.array(rows, dtype=float)


def _objective(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(1.0 / (a @ b)))


def _subgradient(a, b0, iters):
    b = simplex.project_probability(b0)
    best_b, best_v = b, _objective(a, b)
    for k in range(1, iters + 1):
        d = a @ b
        s = int(np.argmin(d))
        g = -a[s] / d[s] ** 2
        n = np.linalg.norm(g)
        if n == 0:
            break
        b = simplex.project_probability(b - g / (n * np.sqrt(k)))
        v = _objective(a, b)
        if v < best_v:
            best_b, best_v = b, v
    return best_b, best_v


def _lp_polish(a: np.ndarray) -> tuple[np.ndarray, float] | None:
    """Maximise ``min_s a_s . b`` over the probability simplex exactly, then
    pick the lexicographically smallest optimal b."""
    S, m = a.shape
    # variables (b_1..b_m, z); maximise z
    c = np.zeros(m + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-a, np.ones((S, 1))])
    b_ub = np.zeros(S)
    A_eq = np.hstack([np.ones((1, m)), np.zeros((1, 1))])
    bounds = [(0, None)] * m + [(None, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if not res.success:
        return None
    z = float(res.x[-1])
    b = res.x[:m]
    fixed = []
    for k in range(m):
        ck = np.zeros(m + 1)
        ck[k] = 1.0
        A2 = np.vstack([A_ub, -np.eye(m + 1)[-1:]])
        b2 = np.concatenate([b_ub, [-(z - 1e-12 * max(1.0, abs(z)))]])
        eq_rows = [A_eq] + [np.eye(m + 1)[j : j + 1] for j, _ in fixed]
        eq_vals = [1.0] + [v for _, v in fixed]
        r2 = linprog(ck, A_ub=A2, b_ub=b2, A_eq=np.vstack(eq_rows), b_eq=eq_vals, bounds=bounds, method="highs")
        if not r2.success:
            break
        b = r2.x[:m]
        fixed.append((k, float(r2.x[k])))
    b = np.maximum(b, 0.0)
    return b / b.sum(), z


def minimax_weights(
    strategies: Sequence[Strategy] | None,
    scenarios: Sequence[CadlagPath] | None = None,
    *,
    wealths: np.ndarray | None = None,
    starts: int = 32,
    iters: int = 500,
    seed: int = 0,
) -> MinimaxResult:
    """Initial weights minimising the worst-case ``W*/W_hat`` at the horizon.

    Terminal child wealths come from the scenarios (or ``wealths`` of shape
    (S, m) directly).  Since ``W_hat(b) = sum_k b_k W_k``, the problem is to
    maximise ``min_s b . W_s / W*_s`` over the probability simplex.  Projected
    subgradient descent from Dirichlet starts (plus a grid for m <= 3) is
    followed by an exact linear-programming polish with a lexicographic
    tie-break.
    """
    if wealths is None:
        if not scenarios:
            raise EmptyScenarioSet("no scenarios given")
        wealths = terminal_wealths(strategies, scenarios)
    W = np.atleast_2d(np.asarray(wealths, dtype=float))
    if W.size == 0:
        raise EmptyScenarioSet("no scenarios given")
    S, m = W.shape
    a = W / W.max(axis=1, keepdims=True)
    rng = np.random.default_rng(seed)
    cands = []
    for b0 in rng.dirichlet(np.ones(m), size=starts):
        cands.append(_subgradient(a, b0, iters))
    if m <= 3:
        n = 60 if m == 3 else 400
        ticks = np.linspace(0.0, 1.0, n + 1)
        pts = np.array(np.meshgrid(*([ticks] * (m - 1)), indexing="ij")).reshape(m - 1, -1).T
        pts = pts[pts.sum(axis=1) <= 1.0 + 1e-12]
        B = np.hstack([pts, 1.0 - pts.sum(axis=1, keepdims=True)])
        vals = np.max(1.0 / (a @ B.T), axis=0)
        j = int(np.argmin(vals))
        cands.append((B[j], float(vals[j])))
    best_b, best_v = min(cands, key=lambda c: c[1])
    lp = _lp_polish(a)
    if lp is not None:
        b_lp, _ = lp
        v_lp = _objective(a, b_lp)
        if v_lp <= best_v * (1 + 1e-12):
            best_b, best_v = b_lp, v_lp
    ratios = 1.0 / (a @ best_b)
    return MinimaxResult(best_b, best_v, ratios, W)


def check_best_final_vs_time_average(
    child: Strategy, T: float, b2: float, path: CadlagPath, partition: Partition | None = None
) -> tuple[LaissezFaire, float]:
    """Build the aggregate and compare its wealth with
    ``(1 - b2) W(t ^ T) + b2 (1/T) int_0^T W(s ^ t) ds`` computed from the
    child's wealth curve on the same grid.  Returns (strategy, max rel error)."""
    agg = best_final_vs_time_average(child, T, b2)
    p = partition if partition is not None else default_ladder(path).finest
    grid = discretize(path, p)
    w_hat = np.exp(log_wealth_curve(agg.allocations(grid), grid))
    W = np.exp(log_wealth_curve(child.allocations(grid), grid))
    t = grid.times
    # W is constant on each [t_i, t_{i+1}) of the grid
    lo, hi = np.minimum(t[:-1], T), np.minimum(t[1:], T)
    integral = np.concatenate([[0.0], np.cumsum(W[:-1] * (hi - lo))])
    stopped = W[np.searchsorted(t, np.minimum(t, T), side="right") - 1]
    target = (1.0 - b2) * stopped + b2 * (integral + W * (T - np.minimum(t, T))) / T
    return agg, float(np.max(np.abs(w_hat - target) / target))
