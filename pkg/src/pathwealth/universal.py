"""Universal portfolio over the convex hull of a family of strategies.

For strategies ``theta_1..theta_m`` and ``b`` in the corner simplex, the
convex combination ``theta(b) = sum_k b_k theta_k`` has per-cell growth
``1 + G_i . b`` with ``G_ik = theta_k(t_i) . dx_i / x_i``.  Everything in
this module is computed from the growth matrix ``G`` of one partition.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import simplex
from .errors import InvalidParams, OmegaViolation, Ruin, SingularSigma
from .paths import (
    LADDER_ATOL,
    LADDER_RTOL,
    CadlagPath,
    Grid,
    OmegaConstraint,
    Partition,
    RefinementLadder,
    as_ladder,
    check_omega,
    discretize,
    stop,
)
from .strategies import Strategy, log_wealth_curve

SINGULAR_RCOND = 1e-10
INTERIOR_TOL = 1e-6
FD_STEP = 1e-6
CHUNK_ELEMENTS = 1 << 21


def growth_matrix(strategies: Sequence[Strategy], grid: Grid) -> np.ndarray:
    """``G[i, k] = theta_k(t_i) . dx_i / x_i``, shape (K, m)."""
    cols = [np.einsum("kd,kd->k", s.allocations(grid), grid.rel) for s in strategies]
    if not cols:
        raise InvalidParams("need at least one strategy")
    return np.stack(cols, axis=1)


def _check_omega(path: CadlagPath, omega: OmegaConstraint | None) -> None:
    if omega is None:
        return
    rep = check_omega(path, omega)
    if not rep.ok:
        raise OmegaViolation(
            f"path jump ratios [{rep.min_ratio!r}, {rep.max_ratio!r}] leave "
            f"(-{omega.delta_minus}, {omega.delta_plus})",
            rep.worst_time,
        )


@dataclass
class GramStats:
    """Gram matrix ``sigma = G'G``, drift vector ``r = sum_i G_i`` and the
    eigenvalue range of ``sigma``."""

    sigma: np.ndarray
    r: np.ndarray
    lambda_min: float
    lambda_max: float
    deviations: list[float] = field(default_factory=list)
    converged: bool = True
    G: np.ndarray | None = field(default=None, repr=False)

    @property
    def m(self) -> int:
        return self.r.size

    @property
    def psd(self) -> bool:
        return self.lambda_min >= -1e-10 * max(self.lambda_max, 0.0)

    @property
    def singular(self) -> bool:
        return not (self.lambda_max > 0 and self.lambda_min / self.lambda_max >= SINGULAR_RCOND)

    def kelly(self) -> tuple[np.ndarray, float]:
        """Unconstrained quadratic maximiser ``sigma^-1 r`` and ``r' sigma^-1 r / 2``."""
        if self.singular:
            raise SingularSigma(f"sigma is singular (eigenvalues {self.lambda_min!r}..{self.lambda_max!r})")
        b = np.linalg.solve(self.sigma, self.r)
        return b, 0.5 * float(self.r @ b)

    def log_det(self) -> float:
        if self.singular:
            raise SingularSigma("sigma is singular")
        return float(np.sum(np.log(np.linalg.eigvalsh(self.sigma))))

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma.tolist(),
            "r": self.r.tolist(),
            "lambda_min": self.lambda_min,
            "lambda_max": self.lambda_max,
            "deviations": self.deviations,
            "converged": self.converged,
        }


def gram_from_growth(G: np.ndarray) -> GramStats:
    sigma = G.T @ G
    sigma = 0.5 * (sigma + sigma.T)
    ev = np.linalg.eigvalsh(sigma)
    return GramStats(sigma, G.sum(axis=0), float(ev[0]), float(ev[-1]), G=G)


def gram(
    strategies: Sequence[Strategy],
    path: CadlagPath,
    ladder: RefinementLadder | Partition | None = None,
    omega: OmegaConstraint | None = None,
) -> GramStats:
    _check_omega(path, omega)
    ladder = as_ladder(path, ladder)
    stats = [gram_from_growth(growth_matrix(strategies, discretize(path, p))) for p in ladder]
    out = stats[-1]
    devs = [float(np.max(np.abs(f.sigma - c.sigma))) for c, f in zip(stats, stats[1:])]
    out.deviations = devs
    if devs:
        scale = float(np.max(np.abs(out.sigma)))
        out.converged = devs[-1] <= max(LADDER_RTOL * scale, LADDER_ATOL)
    return out


def _log_wealth(G: np.ndarray, B: np.ndarray) -> np.ndarray:
    """ln W(b) for each row of B (or a single b); -inf outside the domain."""
    f = 1.0 + G @ np.asarray(B, dtype=float).T
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.sum(np.log(f), axis=0)
    bad = np.any(~(f > 0), axis=0)
    return np.where(bad, -np.inf, out)


def log_wealth_of_b(
    strategies: Sequence[Strategy], path: CadlagPath, partition: Partition
) -> Callable[[np.ndarray], float]:
    """Return ``b -> ln W(theta(b))`` on ``partition``.

    Points slightly outside the simplex are accepted as long as every wealth
    factor stays positive; otherwise :class:`Ruin` is raised.
    """
    grid = discretize(path, partition)
    G = growth_matrix(strategies, grid)

    def fn(b):
        b = np.asarray(b, dtype=float)
        f = 1.0 + G @ b.reshape(-1)
        bad = np.flatnonzero(~(f > 0))
        if bad.size:
            i = int(bad[0])
            raise Ruin(float(grid.times[i + 1]), float(f[i]))
        return float(np.sum(np.log1p(G @ b.reshape(-1))))

    fn.G = G
    fn.grid = grid
    return fn


@dataclass
class MaxResult:
    b_star: np.ndarray
    log_w_star: float
    interior: bool
    iterations: int

    @property
    def w_star(self) -> float:
        return float(np.exp(self.log_w_star))


def _fd_grad(f, b: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    g = np.empty_like(b)
    for k in range(b.size):
        e = np.zeros_like(b)
        e[k] = h
        g[k] = (f(b + e) - f(b - e)) / (2 * h)
    return g


def _ascend(f, b0: np.ndarray, maxit: int = 500) -> tuple[np.ndarray, float, int]:
    """Projected gradient ascent, Barzilai-Borwein step with Armijo backtracking."""
    b = simplex.project(b0)
    fb = f(b)
    g = _fd_grad(f, b)
    step = 1.0 / max(1.0, float(np.linalg.norm(g)))
    it = 0
    for it in range(1, maxit + 1):
        t = step
        while True:
            nb = simplex.project(b + t * g)
            nf = f(nb)
            if nf >= fb + 1e-4 * float(g @ (nb - b)) or t < 1e-18:
                break
            t *= 0.5
        s = nb - b
        if not nf >= fb:
            break
        ng = _fd_grad(f, nb)
        b, fb = nb, nf
        if float(np.linalg.norm(s)) < 1e-13:
            break
        y = ng - g
        sy = float(s @ y)
        step = -float(s @ s) / sy if sy < 0 else 2.0 * t
        g = ng
        if float(np.linalg.norm(simplex.project(b + g / max(1.0, np.linalg.norm(g))) - b)) < 1e-14:
            break
    return b, fb, it


def maximize_growth(G: np.ndarray, starts: Sequence[np.ndarray] | None = None) -> MaxResult:
    """Maximise the concave ``b -> sum_i ln(1 + G_i . b)`` over the corner simplex."""
    m = G.shape[1]

    def f(b):
        return float(_log_wealth(G, b))

    if starts is None:
        starts = [np.full(m, 1.0 / (m + 1)), np.zeros(m)] + [np.eye(m)[k] for k in range(m)]
        st = gram_from_growth(G)
        if not st.singular:
            starts.append(simplex.project(np.linalg.solve(st.sigma, st.r)))
    found = []
    total = 0
    for s in starts:
        b, fb, it = _ascend(f, np.asarray(s, dtype=float))
        total += it
        found.append((b, fb))
    best = max(fb for _, fb in found)
    ties = [b for b, fb in found if fb >= best - 1e-12 * max(1.0, abs(best))]
    b_star = min(ties, key=lambda b: tuple(np.round(b, 9)))
    b_star = np.where(np.abs(b_star) < 1e-15, 0.0, b_star)
    interior = bool(np.all(b_star > INTERIOR_TOL) and 1.0 - b_star.sum() > INTERIOR_TOL)
    return MaxResult(b_star, f(b_star), interior, total)


def maximize_b(strategies: Sequence[Strategy], path: CadlagPath, partition: Partition) -> MaxResult:
    return maximize_growth(growth_matrix(strategies, discretize(path, partition)))


# ---------------------------------------------------------------------------
# quadrature and the node pass


@dataclass
class Quadrature:
    kind: str
    nodes: np.ndarray
    weights: np.ndarray
    seed: int | None = None

    @property
    def size(self) -> int:
        return self.weights.size


def make_quadrature(m: int, spec: Mapping[str, Any] | str | None = None) -> Quadrature:
    """``{"kind": "mc", "N": 4096, "seed": 0}`` or ``{"kind": "grid", "resolution": r}``
    (``per_axis`` nodes may be given instead of ``resolution``)."""
    if spec is None:
        spec = {"kind": "mc"}
    if isinstance(spec, str):
        spec = {"kind": spec}
    kind = spec.get("kind", "mc")
    if kind == "mc":
        n = int(spec.get("N", 4096))
        seed = spec.get("seed", 0)
        B = simplex.uniform_points(n, m, seed)
        return Quadrature("mc", B, np.full(n, 1.0 / n), seed)
    if kind == "grid":
        if "per_axis" in spec:
            per_axis = int(spec["per_axis"])
        else:
            res = float(spec.get("resolution", 0.02))
            if not res > 0:
                raise InvalidParams("grid resolution must be positive")
            per_axis = int(math.ceil(1.0 / res))
        B, w = simplex.grid_nodes(m, per_axis)
        return Quadrature("grid", B, w)
    raise InvalidParams(f"unknown quadrature kind {kind!r}")


@dataclass
class NodePass:
    log_w_hat: np.ndarray  # (K+1,)
    b_hat: np.ndarray  # (K, m) wealth-weighted node average of b at t_i
    terminal: np.ndarray  # (N,) ln W(b_n) at the last grid point
    captured: dict[int, np.ndarray]


def node_pass(
    G: np.ndarray,
    q: Quadrature,
    times: np.ndarray | None = None,
    capture: Sequence[int] = (),
) -> NodePass:
    """Advance ln W(b_n) for all nodes jointly, one chunk of cells at a time.

    ``capture`` lists grid indices at which the full node vector is kept.
    """
    K, m = G.shape
    B, w = q.nodes, q.weights
    N = w.size
    wB = w[:, None] * B
    chunk = max(1, CHUNK_ELEMENTS // max(N, 1))
    log_w_hat = np.zeros(K + 1)
    b_hat = np.zeros((K, m))
    carry = np.zeros(N)
    captured = {}
    cap = sorted(set(int(c) for c in capture))
    if 0 in cap:
        captured[0] = carry.copy()
    prev_bhat = w @ B  # node average at t_0 where all wealths equal one
    for i0 in range(0, K, chunk):
        i1 = min(K, i0 + chunk)
        F = 1.0 + G[i0:i1] @ B.T
        bad = ~(F > 0)
        if bad.any():
            r, n = np.argwhere(bad)[0]
            t = float(times[i0 + r + 1]) if times is not None else float(i0 + r + 1)
            raise Ruin(t, float(F[r, n]), node=int(n))
        L = carry + np.cumsum(np.log(F), axis=0)
        M = L.max(axis=1, keepdims=True)
        E = np.exp(L - M)
        S = E @ w
        log_w_hat[i0 + 1 : i1 + 1] = M[:, 0] + np.log(S)
        bh = (E @ wB) / S[:, None]
        b_hat[i0] = prev_bhat
        b_hat[i0 + 1 : i1] = bh[:-1]
        prev_bhat = bh[-1]
        for c in cap:
            if i0 < c <= i1:
                captured[c] = L[c - i0 - 1].copy()
        carry = L[-1]
    return NodePass(log_w_hat, b_hat, carry, captured)


class UniversalStrategy(Strategy):
    """Wealth-weighted average of ``theta(b)`` over fixed quadrature nodes."""

    kind = "universal"

    def __init__(self, strategies: Sequence[Strategy], quadrature: Quadrature):
        self.strategies = list(strategies)
        self.quadrature = quadrature

    def params(self):
        return {"strategies": [s.to_spec() for s in self.strategies], "quadrature": self.quadrature.kind}

    def allocations(self, grid):
        allocs = np.stack([s.allocations(grid) for s in self.strategies])
        G = np.einsum("mkd,kd->km", allocs, grid.rel)
        bh = node_pass(G, self.quadrature, grid.times).b_hat
        return np.einsum("km,mkd->kd", bh, allocs)


# ---------------------------------------------------------------------------
# Gaussian ratio


@dataclass
class Estimate:
    value: float
    stderr: float
    method: str


def _q(sigma: np.ndarray, B: np.ndarray, b_star: np.ndarray) -> np.ndarray:
    D = np.atleast_2d(B) - b_star
    return np.einsum("ni,ij,nj->n", D, sigma, D)


def gaussian_ratio(
    gram_stats: GramStats,
    b_star: np.ndarray,
    delta: float,
    method: str = "simplex",
    n: int = 4096,
    seed: int | None = 0,
    quadrature: Quadrature | None = None,
) -> Estimate:
    """Simplex average of ``exp(-(b-b*)' sigma (b-b*) / (2 (1-delta)^2))``.

    ``method="simplex"`` averages the integrand over uniform (or supplied)
    simplex nodes and also works for singular sigma.  ``method="gaussian"``
    rewrites it as ``m! (1-delta)^m (2 pi)^{m/2} / sqrt(det sigma)`` times
    the probability that ``N(b*, (1-delta)^2 sigma^-1)`` lands in the
    simplex, estimated by sampling.
    """
    sigma = gram_stats.sigma
    m = sigma.shape[0]
    b_star = np.asarray(b_star, dtype=float)
    s = 1.0 - float(delta)
    if not s > 0:
        raise InvalidParams("delta must be < 1")
    if method == "simplex":
        q = quadrature if quadrature is not None else make_quadrature(m, {"kind": "mc", "N": n, "seed": seed})
        vals = np.exp(-_q(sigma, q.nodes, b_star) / (2 * s * s))
        est = float(q.weights @ vals)
        if q.kind == "mc":
            se = float(np.std(vals, ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
        else:
            se = 0.0
        return Estimate(est, se, "simplex")
    if method == "gaussian":
        if gram_stats.singular:
            raise SingularSigma(
                f"sigma eigenvalue ratio {gram_stats.lambda_min!r}/{gram_stats.lambda_max!r} below {SINGULAR_RCOND}"
            )
        ev, V = np.linalg.eigh(sigma)
        const = math.factorial(m) * s**m * (2 * np.pi) ** (m / 2) / np.sqrt(np.prod(ev))
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((n, m))
        Y = b_star + s * (z / np.sqrt(ev)) @ V.T
        inside = simplex.contains(Y).astype(float)
        p = inside.mean()
        se = const * np.sqrt(max(p * (1 - p), 0.0) / n)
        return Estimate(float(const * p), float(se), "gaussian")
    raise InvalidParams(f"unknown estimator {method!r}")


# ---------------------------------------------------------------------------
# the universal portfolio


@dataclass
class UniversalResult:
    times: np.ndarray
    theta_hat: np.ndarray
    b_hat: np.ndarray
    log_w_hat: np.ndarray
    b_star: np.ndarray
    log_w_star: float
    interior: bool
    mc_stderr: float
    quadrature: Quadrature
    gram: GramStats
    terminal: np.ndarray
    continuous: bool
    gaussian_bracket: tuple[float, float] | None = None
    log_w_star_curve: np.ndarray | None = None

    @property
    def w_hat(self) -> np.ndarray:
        return np.exp(self.log_w_hat)

    @property
    def w_star(self) -> float:
        return float(np.exp(self.log_w_star))

    @property
    def ratio(self) -> float:
        return float(np.exp(self.log_w_hat[-1] - self.log_w_star))

    @property
    def ratio_stderr(self) -> float:
        return self.mc_stderr / self.w_star

    def to_dict(self) -> dict:
        return {
            "horizon": float(self.times[-1]),
            "w_hat": float(self.w_hat[-1]),
            "w_star": self.w_star,
            "ratio": self.ratio,
            "b_star": self.b_star.tolist(),
            "interior": self.interior,
            "mc_stderr": self.mc_stderr,
            "quadrature": {"kind": self.quadrature.kind, "nodes": self.quadrature.size, "seed": self.quadrature.seed},
            "gaussian_bracket": None if self.gaussian_bracket is None else list(self.gaussian_bracket),
            "gram": self.gram.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def curves_csv(self) -> str:
        """Columns t, W_hat, W_star, ratio, bracket_lo, bracket_hi along the grid."""
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["t", "W_hat", "W_star", "ratio", "bracket_lo", "bracket_hi"])
        lo, hi = self.gaussian_bracket if self.gaussian_bracket is not None else (None, None)
        ws = self.log_w_star_curve
        n = self.times.size
        for i in range(n):
            last = i == n - 1
            wstar = None
            if last:
                wstar = self.w_star
            elif ws is not None and np.isfinite(ws[i]):
                wstar = float(np.exp(ws[i]))
            what = float(np.exp(self.log_w_hat[i]))
            row = [self.times[i], what, wstar, None if wstar is None else what / wstar,
                   lo if last else None, hi if last else None]
            wr.writerow(["" if v is None else repr(float(v)) for v in row])
        return buf.getvalue()


def bracket_values(gram_stats: GramStats, b_star, delta_minus: float, delta_plus: float,
                   quadrature: Quadrature) -> tuple[Estimate, Estimate]:
    lo = gaussian_ratio(gram_stats, b_star, delta_minus, quadrature=quadrature)
    hi = gaussian_ratio(gram_stats, b_star, -delta_plus, quadrature=quadrature)
    return lo, hi


def universal_from_grid(
    strategies: Sequence[Strategy],
    grid: Grid,
    quadrature: Mapping[str, Any] | Quadrature | str | None = None,
    omega: OmegaConstraint | None = None,
    w_star_curve: bool = False,
) -> UniversalResult:
    allocs = np.stack([s.allocations(grid) for s in strategies])
    G = np.einsum("mkd,kd->km", allocs, grid.rel)
    m = G.shape[1]
    q = quadrature if isinstance(quadrature, Quadrature) else make_quadrature(m, quadrature)
    npass = node_pass(G, q, grid.times)
    theta_hat = np.einsum("km,mkd->kd", npass.b_hat, allocs)
    mx = maximize_growth(G)
    stats = gram_from_growth(G)
    Wn = np.exp(npass.terminal)
    if q.kind == "mc" and q.size > 1:
        se = float(np.std(Wn, ddof=1) / np.sqrt(q.size))
    else:
        se = 0.0
    bracket = None
    if mx.interior and not stats.singular:
        if omega is not None:
            lo, hi = bracket_values(stats, mx.b_star, omega.delta_minus, omega.delta_plus, q)
            bracket = (min(lo.value, hi.value), max(lo.value, hi.value))
        elif grid.continuous:
            g0 = gaussian_ratio(stats, mx.b_star, 0.0, quadrature=q).value
            bracket = (g0, g0)
    ws = None
    if w_star_curve:
        ws = np.full(grid.times.size, np.nan)
        ws[0] = 0.0
        for c in np.unique(np.linspace(0, G.shape[0], min(G.shape[0], 64) + 1).astype(int))[1:]:
            ws[c] = maximize_growth(G[:c]).log_w_star
    return UniversalResult(
        grid.times, theta_hat, npass.b_hat, npass.log_w_hat, mx.b_star, mx.log_w_star,
        mx.interior, se, q, stats, npass.terminal, grid.continuous, bracket, ws,
    )


def universal_portfolio(
    strategies: Sequence[Strategy],
    path: CadlagPath,
    partition: Partition | None = None,
    quadrature: Mapping[str, Any] | Quadrature | str | None = None,
    omega: OmegaConstraint | None = None,
) -> UniversalResult:
    """Universal portfolio on one partition (the path's knots by default).

    All node wealths move forward together through the grid; ``Ŵ`` is their
    quadrature average and ``theta_hat`` the wealth-weighted average of the
    node allocations.
    """
    _check_omega(path, omega)
    grid = discretize(path, partition if partition is not None else path.times)
    return universal_from_grid(strategies, grid, quadrature, omega)


@dataclass
class RatioVerdict:
    ok: bool
    ratio: float
    lower: float
    upper: float
    tolerance: float
    continuous_ok: bool | None
    delta0: float | None
    skipped: str | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def exact_ratio_check(
    result: UniversalResult,
    gram_stats: GramStats | None = None,
    delta_minus: float = 0.3,
    delta_plus: float = 0.3,
    continuous_tol: float = 0.05,
) -> RatioVerdict:
    """Check ``Ŵ/W*`` against the Gaussian ratios at ``-delta_plus`` and ``delta_minus``.

    The integrand ``exp(-q / (2 (1-delta)^2))`` decreases in delta, so the
    interval is ``[gr(delta_minus), gr(-delta_plus)]``.  The tolerance is three
    combined standard errors; the Gaussian ratios reuse the result's nodes.
    On continuous paths the ratio is also compared with ``gr(0)``.
    """
    gram_stats = result.gram if gram_stats is None else gram_stats
    ratio = result.ratio
    if np.all(gram_stats.sigma == 0):
        ok = abs(ratio - 1.0) <= 1e-12
        return RatioVerdict(ok, ratio, 1.0, 1.0, 0.0, ok if result.continuous else None, 1.0)
    if not result.interior:
        return RatioVerdict(True, ratio, float("nan"), float("nan"), 0.0, None, None, "b* not interior")
    if gram_stats.singular:
        return RatioVerdict(True, ratio, float("nan"), float("nan"), 0.0, None, None, "sigma singular")
    lo, hi = bracket_values(gram_stats, result.b_star, delta_minus, delta_plus, result.quadrature)
    lower, upper = min(lo.value, hi.value), max(lo.value, hi.value)
    tol = 3.0 * float(np.sqrt(result.ratio_stderr**2 + max(lo.stderr, hi.stderr) ** 2))
    ok = lower - tol <= ratio <= upper + tol
    cont = None
    d0 = None
    if result.continuous:
        d0 = gaussian_ratio(gram_stats, result.b_star, 0.0, quadrature=result.quadrature).value
        cont = abs(ratio / d0 - 1.0) <= continuous_tol
    return RatioVerdict(bool(ok), ratio, lower, upper, tol, cont, d0)


# ---------------------------------------------------------------------------
# asymptotics


@dataclass
class AsymptoticsRow:
    t: float
    log_ratio: float
    log_det_term: float | None
    ratio: float | None
    rate: float
    interior: bool
    b_star: list[float]

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def asymptotics_experiment(
    strategies: Sequence[Strategy],
    path_generator: Callable[[float], CadlagPath] | CadlagPath,
    horizons: Sequence[float],
    quadrature: Mapping[str, Any] | Quadrature | str | None = None,
    partition: Partition | None = None,
) -> list[AsymptoticsRow]:
    """``ln(W*/Ŵ)`` against ``½ ln det sigma_t - ln(m! (2 pi)^{m/2})`` per horizon.

    One path is generated at the largest horizon; shorter horizons use its
    prefixes and a single node pass captures every horizon.  The ratio column
    is None when ``b*`` is not interior or sigma is singular.
    """
    horizons = sorted(float(h) for h in horizons)
    if not horizons or horizons[0] <= 0:
        raise InvalidParams("horizons must be positive")
    tmax = horizons[-1]
    path = path_generator(tmax) if callable(path_generator) and not isinstance(path_generator, CadlagPath) else path_generator
    if path.horizon < tmax - 1e-12:
        raise InvalidParams("path does not reach the largest horizon")
    grid = discretize(path, partition if partition is not None else path.times)
    allocs = np.stack([s.allocations(grid) for s in strategies])
    G = np.einsum("mkd,kd->km", allocs, grid.rel)
    m = G.shape[1]
    q = quadrature if isinstance(quadrature, Quadrature) else make_quadrature(m, quadrature)
    idx = [int(np.searchsorted(grid.times, h, side="right") - 1) for h in horizons]
    npass = node_pass(G, q, grid.times, capture=idx)
    const = math.log(math.factorial(m)) + 0.5 * m * math.log(2 * math.pi)
    rows = []
    for h, k in zip(horizons, idx):
        Gk = G[:k]
        mx = maximize_growth(Gk)
        log_ratio = mx.log_w_star - float(npass.log_w_hat[k])
        st = gram_from_growth(Gk)
        if st.singular or not mx.interior:
            det_term, ratio = None, None
            if not st.singular:
                det_term = 0.5 * st.log_det() - const
        else:
            det_term = 0.5 * st.log_det() - const
            ratio = log_ratio / det_term if det_term != 0 else None
        rows.append(AsymptoticsRow(h, log_ratio, det_term, ratio, log_ratio / h, mx.interior, mx.b_star.tolist()))
    return rows
