"""Self-financing wealth of allocation strategies.

Wealth follows the product recursion

    V(t_{i+1}) = V(t_i) * (1 + theta_i . (x(t_{i+1}) - x(t_i)) / x(t_i))

on a partition, with ``theta_i`` the strategy's left evaluation at
``t_{i+1}`` (see :mod:`pathwealth.strategies`).  Limits are taken along a
refinement ladder and reported with between-level diagnostics.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .errors import InvalidParams, OmegaViolation, UnknownKind
from .paths import (
    LADDER_ATOL,
    CadlagPath,
    Grid,
    OmegaConstraint,
    Partition,
    RefinementLadder,
    as_ladder,
    check_omega,
    discretize,
)
from .strategies import Strategy, from_spec, growth, log_wealth_curve

DEFAULT_TOLERANCE = 1e-6


@dataclass
class WealthCurve:
    """Wealth along the finest partition used, plus ladder diagnostics.

    ``log_values[i]`` is ``ln(V(t_i) / xi)``; ``values`` is ``V`` itself.
    ``deviations[n]`` is the max relative gap between levels n and n+1 at
    the coarser level's points.
    """

    times: np.ndarray
    log_values: np.ndarray
    xi: float = 1.0
    grid: Grid | None = None
    allocations: np.ndarray | None = None
    level_mesh: list[float] = field(default_factory=list)
    deviations: list[float] = field(default_factory=list)
    converged: bool = True
    tolerance: float = DEFAULT_TOLERANCE
    point_dev: np.ndarray | None = None

    @property
    def values(self) -> np.ndarray:
        return self.xi * np.exp(self.log_values)

    @property
    def final(self) -> float:
        return float(self.values[-1])

    def at(self, t) -> np.ndarray | float:
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") - 1
        out = self.values[np.maximum(idx, 0)]
        return float(out) if np.ndim(out) == 0 else out

    @property
    def non_convergent(self) -> bool:
        return not self.converged

    def point_deviation(self) -> np.ndarray:
        """|V_fine - V_coarse| / V_fine at grid points shared with the next
        coarser level; NaN elsewhere and when there is a single level."""
        if self.point_dev is None:
            return np.full(self.times.size, np.nan)
        return self.point_dev

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "V", "level_deviation"])
        dev = self.point_deviation()
        for t, v, d in zip(self.times, self.values, dev):
            w.writerow([repr(float(t)), repr(float(v)), "" if np.isnan(d) else repr(float(d))])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "xi": self.xi,
            "final": self.final,
            "horizon": float(self.times[-1]),
            "diagnostics": {
                "level_mesh": [float(m) for m in self.level_mesh],
                "deviations": [float(d) for d in self.deviations],
                "converged": bool(self.converged),
                "tolerance": self.tolerance,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _check_xi(xi: float) -> float:
    xi = float(xi)
    if not xi > 0 or not np.isfinite(xi):
        raise InvalidParams(f"initial wealth must be positive, got {xi!r}")
    return xi


def wealth_on_grid(strategy: Strategy, grid: Grid, xi: float = 1.0) -> WealthCurve:
    xi = _check_xi(xi)
    A = strategy.allocations(grid)
    return WealthCurve(grid.times, log_wealth_curve(A, grid), xi, grid, A)


def wealth_discrete(strategy: Strategy, path: CadlagPath, p: Partition, xi: float = 1.0) -> WealthCurve:
    """Wealth by the product recursion on one partition."""
    if p.horizon > path.horizon and path.interpolation == "dense":
        raise InvalidParams("partition extends beyond the sampled horizon")
    curve = wealth_on_grid(strategy, discretize(path, p), xi)
    curve.level_mesh = [p.mesh]
    return curve


def _rel_gap(fine: WealthCurve, coarse: WealthCurve):
    idx = np.searchsorted(fine.times, coarse.times, side="right") - 1
    lf = fine.log_values[idx]
    gap = np.abs(np.expm1(coarse.log_values - lf))
    return idx, gap


def wealth_limit(
    strategy: Strategy,
    path: CadlagPath,
    ladder: RefinementLadder | None = None,
    xi: float = 1.0,
    tolerance: float = DEFAULT_TOLERANCE,
) -> WealthCurve:
    """Wealth along every ladder level; returns the finest curve.

    ``converged`` is False (the NonConvergent flag) when the two finest
    levels differ by more than ``tolerance`` relative (absolute floor 1e-12).
    On step paths whose jumps all lie on the grids the levels agree exactly.
    """
    ladder = as_ladder(path, ladder)
    curves = [wealth_discrete(strategy, path, p, xi) for p in ladder]
    devs = []
    point_dev = np.full(curves[-1].times.size, np.nan)
    for coarse, fine in zip(curves, curves[1:]):
        idx, gap = _rel_gap(fine, coarse)
        devs.append(float(gap.max()) if gap.size else 0.0)
        if fine is curves[-1]:
            point_dev[idx] = gap
    out = curves[-1]
    out.level_mesh = [p.mesh for p in ladder]
    out.deviations = devs
    out.tolerance = tolerance
    if devs:
        scale = float(np.max(out.values))
        out.converged = devs[-1] <= tolerance or devs[-1] * scale <= LADDER_ATOL
    out.point_dev = point_dev
    return out


@dataclass
class ImplementationCurves:
    """Holdings set at each ``t_i`` and kept over ``(t_i, t_{i+1}]``."""

    times: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    value_residual: float
    rebalancing_residual: float


def _grid_and_alloc(strategy, wealth: WealthCurve, path):
    grid = wealth.grid
    if grid is None:
        grid = discretize(path, np.unique(wealth.times))
    A = wealth.allocations if wealth.allocations is not None else strategy.allocations(grid)
    return grid, A


def implementation(strategy: Strategy, wealth: WealthCurve, path: CadlagPath | None = None) -> ImplementationCurves:
    """Share counts ``phi = theta V / x`` and cash ``psi = (1 - sum theta) V``."""
    grid, A = _grid_and_alloc(strategy, wealth, path)
    V = wealth.values
    x = grid.values[:-1]
    phi = A * V[:-1, None] / x
    psi = (1.0 - A.sum(axis=1)) * V[:-1]
    value_res = np.abs(np.einsum("kd,kd->k", phi, x) + psi - V[:-1]) / V[:-1]
    if grid.steps > 1:
        x_next = grid.values[1:-1]
        rebal = np.einsum("kd,kd->k", phi[1:] - phi[:-1], x_next) + psi[1:] - psi[:-1]
        rebal_res = float(np.max(np.abs(rebal) / V[1:-1]))
    else:
        rebal_res = 0.0
    return ImplementationCurves(
        grid.times[:-1], phi, psi, float(value_res.max()) if value_res.size else 0.0, rebal_res
    )


@dataclass
class SelfFinancingReport:
    rebalancing_residual: float
    value_residual: float
    ppde_residual: float
    ppde_probes: int
    horizontal_residual: float
    epsilon: float
    mesh: float

    def ok(self, tol: float = 1e-10) -> bool:
        return max(self.rebalancing_residual, self.value_residual, self.horizontal_residual) <= tol

    def to_dict(self) -> dict:
        return {
            "rebalancing_residual": self.rebalancing_residual,
            "value_residual": self.value_residual,
            "ppde_residual": self.ppde_residual,
            "ppde_probes": self.ppde_probes,
            "horizontal_residual": self.horizontal_residual,
            "epsilon": self.epsilon,
            "mesh": self.mesh,
        }


def _bumped_final(strategy: Strategy, grid: Grid, k: int, j: int, h: float) -> float:
    """V(t_k) recomputed from scratch with x_j(t_k) moved by h."""
    pre = grid.prefix(k)
    vals = np.array(pre.values)
    vals[-1, j] += h
    g = Grid(pre.times, vals, pre.continuous)
    return float(np.exp(log_wealth_curve(strategy.allocations(g), g)[-1]))


def verify_self_financing(
    strategy: Strategy,
    path: CadlagPath,
    p: Partition,
    xi: float = 1.0,
    eps: float = 1e-5,
    probes: int = 50,
) -> SelfFinancingReport:
    """Discrete self-financing checks on one partition.

    (a) rebalancing identity ``dphi . x + dpsi = 0`` and value identity
    ``phi . x + psi = V``; (b) vertical finite difference of V against
    ``(theta V / x)_-`` at up to ``probes`` grid points, with a central
    bump of ``eps * x_j``; (c) extending the stopped path by a constant
    piece leaves V unchanged.  All residuals are relative to V.
    """
    curve = wealth_discrete(strategy, path, p, 1.0)
    grid, A = curve.grid, curve.allocations
    impl = implementation(strategy, curve, path)
    V = curve.values

    ks = np.unique(np.linspace(1, grid.steps, min(probes, grid.steps)).round().astype(int))
    ppde = 0.0
    for k in ks:
        x_prev = grid.values[k - 1]
        target = A[k - 1] * V[k - 1] / x_prev
        for j in range(grid.dim):
            h = eps * grid.values[k, j]
            up = _bumped_final(strategy, grid, k, j, h)
            dn = _bumped_final(strategy, grid, k, j, -h)
            fd = (up - dn) / (2 * h)
            ppde = max(ppde, abs(fd - target[j]) * grid.values[k, j] / V[k])

    T = grid.horizon
    ext_t = np.concatenate([grid.times, T + np.linspace(0.1, 1.0, 5) * max(T, 1.0)])
    ext_v = np.vstack([grid.values, np.repeat(grid.values[-1:], 5, axis=0)])
    ext = Grid(ext_t, ext_v, grid.continuous)
    lw = log_wealth_curve(strategy.allocations(ext), ext)
    horiz = float(np.max(np.abs(np.expm1(lw[grid.times.size - 1 :] - curve.log_values[-1]))))

    return SelfFinancingReport(
        impl.rebalancing_residual, impl.value_residual, ppde, int(ks.size), horiz, eps, p.mesh
    )


@dataclass
class ItoDecomposition:
    """``ln V = drift - qv + jumps`` along the finest grid.

    ``drift`` is the left-Riemann sum of ``theta . dx / x``, ``qv`` half the
    sum of its squares, ``jumps`` the remainder series and ``bound`` its
    majorant ``sum g^2 / (2 (1 - delta_minus)^2)``.
    """

    times: np.ndarray
    log_wealth: np.ndarray
    drift: np.ndarray
    qv: np.ndarray
    jumps: np.ndarray
    bound: np.ndarray
    delta_minus: float
    residual: float
    bound_holds: bool


def ito_decomposition(
    strategy: Strategy,
    path: CadlagPath,
    ladder: RefinementLadder | None = None,
    omega: OmegaConstraint | None = None,
) -> ItoDecomposition:
    if omega is not None:
        rep = check_omega(path, omega)
        if not rep.ok:
            raise OmegaViolation(
                f"path jump ratio outside (-{omega.delta_minus}, {omega.delta_plus}): "
                f"min {rep.min_ratio!r}, max {rep.max_ratio!r}",
                rep.worst_time,
                rep.min_ratio if -rep.min_ratio / omega.delta_minus > rep.max_ratio / omega.delta_plus else rep.max_ratio,
            )
    ladder = as_ladder(path, ladder)
    grid = discretize(path, ladder.finest)
    A = strategy.allocations(grid)
    lw = log_wealth_curve(A, grid)
    g = growth(A, grid)
    z = np.zeros(1)
    drift = np.concatenate([z, np.cumsum(g)])
    qv = np.concatenate([z, np.cumsum(0.5 * g * g)])
    jumps = np.concatenate([z, np.cumsum(np.log1p(g) - g + 0.5 * g * g)])
    if omega is not None:
        dm = omega.delta_minus
    else:
        dm = float(max(0.0, -g.min())) if g.size else 0.0
    bound = np.concatenate([z, np.cumsum(g * g)]) / (2.0 * (1.0 - dm) ** 2)
    residual = float(np.max(np.abs(lw - (drift - qv + jumps))))
    holds = bool(np.all(np.abs(jumps) <= bound * (1 + 1e-12) + 1e-300))
    return ItoDecomposition(grid.times, lw, drift, qv, jumps, bound, dm, residual, holds)


# ---------------------------------------------------------------------------
# closed forms


def _breaks(path: CadlagPath, a: float, b: float) -> np.ndarray:
    inner = path.times[(path.times > a) & (path.times < b)]
    return np.concatenate([[a], inner, [b]])


def _pieces(path: CadlagPath, j: int, a: float, b: float):
    """(left, right, value_left, value_right_limit) per piece of [a, b]."""
    br = _breaks(path, a, b)
    lo, hi = br[:-1], br[1:]
    vl = path(lo)[:, j]
    vr = path.left(hi)[:, j] if path.interpolation == "linear" else vl
    return lo, hi, vl, vr


def time_integral(path: CadlagPath, j: int, a: float, b: float) -> float:
    """Exact ``int_a^b x_j(s) ds`` (x constant beyond the last knot)."""
    if b <= a:
        return 0.0
    lo, hi, vl, vr = _pieces(path, j, a, b)
    return float(np.sum(0.5 * (vl + vr) * (hi - lo)))


def _one_minus_exp_poly(u: np.ndarray) -> np.ndarray:
    """``1 - e^{-u} (1 + u)`` without cancellation for small u."""
    u = np.asarray(u, dtype=float)
    out = -np.expm1(-u) - u * np.exp(-u)
    small = u < 0.1
    if np.any(small):
        us = u[small]
        acc = np.zeros_like(us)
        fact = 1.0
        for n in range(2, 16):
            fact *= n
            acc += (-1) ** n * (n - 1) * us**n / fact
        out[small] = acc
    return out


def exp_weighted_integral(path: CadlagPath, j: int, lam: float, t: float) -> float:
    """Exact ``lam * int_0^t x_j(s) e^{-lam s} ds``."""
    if t <= 0:
        return 0.0
    lo, hi, vl, vr = _pieces(path, j, 0.0, t)
    h = hi - lo
    ea = np.exp(-lam * lo)
    const = vl * (ea - np.exp(-lam * hi))
    slope = (vr - vl) / h
    lin = slope * ea * _one_minus_exp_poly(lam * h) / lam
    return float(np.sum(const + lin))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def _gauss_integral(f, breaks: np.ndarray) -> float:
    lo, hi = breaks[:-1], breaks[1:]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    nodes = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    vals = np.asarray(f(nodes), dtype=float).reshape(lo.size, -1)
    return float(np.sum(half * (vals @ _GL_W)))


def _closed_scalar(strategy: Strategy, path: CadlagPath, t: float) -> float:
    from .strategies import (
        Cash,
        ExponentialAverage,
        MarketIndex,
        PortfolioOfPortfolio,
        SimpleAverage,
        SingleStock,
    )

    xt = path(t)
    x0 = path.x0
    if isinstance(strategy, Cash):
        return 1.0
    if isinstance(strategy, SingleStock):
        j = strategy.i - 1
        return float(xt[j] / x0[j])
    if isinstance(strategy, MarketIndex):
        return float(xt.sum() / x0.sum())
    if isinstance(strategy, SimpleAverage):
        j, T = strategy.i - 1, strategy.T
        u = min(t, T)
        return float((time_integral(path, j, 0.0, u) + xt[j] * (T - u)) / (T * x0[j]))
    if isinstance(strategy, ExponentialAverage):
        j, lam = strategy.i - 1, strategy.lam
        return float((exp_weighted_integral(path, j, lam, t) + xt[j] * np.exp(-lam * t)) / x0[j])
    if isinstance(strategy, PortfolioOfPortfolio):
        T = strategy.T
        u = min(t, T)
        child = strategy.child
        if u > 0:
            br = _breaks(path, 0.0, u)
            integral = _gauss_integral(lambda s: [_closed_scalar(child, path, float(v)) for v in s], br)
        else:
            integral = 0.0
        return float((integral + _closed_scalar(child, path, t) * (T - u)) / T)
    raise UnknownKind(f"no closed form for {strategy!r}")


CLOSED_FORM_KINDS = ("cash", "single_stock", "market_index", "simple_average", "exponential_average",
                     "portfolio_of_portfolio")


def closed_form_wealth(kind: str | Strategy, params: Mapping[str, Any] | None, path: CadlagPath, t):
    """Closed-form wealth (initial value 1) of a built-in strategy at ``t``.

    ``kind`` is a strategy kind with its ``params`` (as in a strategy spec)
    or a strategy object.  Vectorised over ``t``.
    """
    if isinstance(kind, Strategy):
        strategy = kind
    else:
        if kind not in CLOSED_FORM_KINDS:
            raise UnknownKind(f"no closed form for kind {kind!r}")
        strategy = from_spec({"kind": kind, "params": dict(params or {})})
    ts = np.asarray(t, dtype=float)
    out = np.array([_closed_scalar(strategy, path, float(s)) for s in ts.ravel()]).reshape(ts.shape)
    return float(out) if out.ndim == 0 else out
