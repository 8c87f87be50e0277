"""Seeded path generators.

Every generator is a pure function of ``(params, seed)``; the same inputs
always give bit-identical paths.
"""

from __future__ import annotations

from typing import Any, Mapping

import numpy as np

from .errors import InvalidParams
from .paths import CadlagPath, OmegaConstraint


def _vec(value, d: int, name: str) -> np.ndarray:
    a = np.asarray(value, dtype=float)
    if a.ndim == 0:
        a = np.full(d, float(a))
    if a.shape != (d,):
        raise InvalidParams(f"{name} must be a scalar or a length-{d} vector")
    if not np.all(np.isfinite(a)):
        raise InvalidParams(f"{name} must be finite")
    return a


def _corr_factor(corr, d: int) -> np.ndarray:
    if corr is None:
        return np.eye(d)
    c = np.asarray(corr, dtype=float)
    if c.ndim == 0:
        if not -1.0 / max(d - 1, 1) < float(c) < 1.0 and d > 1:
            raise InvalidParams("equicorrelation must lie in (-1/(d-1), 1)")
        c = np.full((d, d), float(c))
        np.fill_diagonal(c, 1.0)
    if c.shape != (d, d) or not np.allclose(c, c.T) or not np.allclose(np.diag(c), 1.0):
        raise InvalidParams("corr must be a symmetric unit-diagonal matrix")
    try:
        return np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        raise InvalidParams("corr is not positive definite") from None


def _common(params: Mapping[str, Any]):
    d = int(params.get("d", params.get("dim", 1)))
    if d < 1:
        raise InvalidParams("d must be >= 1")
    T = float(params.get("T", 1.0))
    if not T > 0:
        raise InvalidParams("T must be positive")
    steps = int(params.get("steps", 1000))
    if steps < 1:
        raise InvalidParams("steps must be >= 1")
    x0 = _vec(params.get("x0", 100.0), d, "x0")
    if np.any(x0 <= 0):
        raise InvalidParams("x0 must be positive")
    return d, T, steps, x0


def _log_diffusion(params, d, T, steps, rng) -> np.ndarray:
    """Exact log-increments of a correlated geometric Brownian motion, shape (steps, d)."""
    mu = _vec(params.get("mu", 0.0), d, "mu")
    sigma = _vec(params.get("sigma", 0.2), d, "sigma")
    if np.any(sigma < 0):
        raise InvalidParams("sigma must be non-negative")
    L = _corr_factor(params.get("corr"), d)
    dt = T / steps
    z = rng.standard_normal((steps, d)) @ L.T
    return (mu - 0.5 * sigma**2) * dt + sigma * np.sqrt(dt) * z


def gbm(params: Mapping[str, Any], seed: int | None = None) -> CadlagPath:
    """Geometric Brownian motion sampled on a uniform grid (``dense`` path).

    Params: ``d``, ``x0``, ``mu``, ``sigma`` (scalars or vectors), ``corr``
    (scalar equicorrelation or matrix), ``T``, ``steps``.
    """
    d, T, steps, x0 = _common(params)
    rng = np.random.default_rng(seed)
    inc = _log_diffusion(params, d, T, steps, rng)
    logx = np.vstack([np.zeros(d), np.cumsum(inc, axis=0)]) + np.log(x0)
    return CadlagPath(np.linspace(0.0, T, steps + 1), np.exp(logx), "dense")


def jump_diffusion(params: Mapping[str, Any], seed: int | None = None) -> CadlagPath:
    """GBM plus compound-Poisson log-normal jumps, as a step path.

    Extra params: ``jump_rate`` (per unit time), ``jump_mean`` and
    ``jump_std`` of the log jump, ``delta_minus`` / ``delta_plus``.  Each
    step's total relative move is clipped into
    ``[-0.95 delta_minus, 0.95 delta_plus]`` so the path stays inside the
    corresponding jump-bound domain.
    """
    d, T, steps, x0 = _common(params)
    omega = OmegaConstraint(float(params.get("delta_minus", 0.3)), float(params.get("delta_plus", 0.3)))
    rate = float(params.get("jump_rate", 5.0))
    if rate < 0:
        raise InvalidParams("jump_rate must be non-negative")
    jm = float(params.get("jump_mean", 0.0))
    js = float(params.get("jump_std", 0.05))
    if js < 0:
        raise InvalidParams("jump_std must be non-negative")
    rng = np.random.default_rng(seed)
    inc = _log_diffusion(params, d, T, steps, rng)
    counts = rng.poisson(rate * T / steps, size=(steps, d))
    jumps = jm * counts + js * np.sqrt(counts) * rng.standard_normal((steps, d))
    rel = np.expm1(inc + jumps)
    rel = np.clip(rel, -0.95 * omega.delta_minus, 0.95 * omega.delta_plus)
    x = x0 * np.vstack([np.ones(d), np.cumprod(1.0 + rel, axis=0)])
    return CadlagPath(np.linspace(0.0, T, steps + 1), x, "constant")


def step(params: Mapping[str, Any], seed: int | None = None) -> CadlagPath:
    """Step path with finitely many jumps.

    Either give ``jumps``: a list of ``(time, factor)`` pairs, ``factor``
    scalar or per-asset, or give ``n_jumps`` and let the generator place
    them at distinct points of a uniform grid with ``grid`` cells (default
    1024) and draw relative moves uniformly in ``[low, high]``
    per asset (defaults -0.2, 0.2).
    """
    d, T, _, x0 = _common(params)
    if "jumps" in params:
        items = sorted(((float(t), f) for t, f in params["jumps"]), key=lambda p: p[0])
        times = [t for t, _ in items]
        if any(not 0 < t <= T for t in times) or len(set(times)) != len(times):
            raise InvalidParams("jump times must be distinct and lie in (0, T]")
        factors = np.array([_vec(f, d, "jump factor") for _, f in items]).reshape(-1, d)
        if np.any(factors <= 0):
            raise InvalidParams("jump factors must be positive")
    else:
        n = int(params.get("n_jumps", 10))
        cells = int(params.get("grid", 1024))
        low = float(params.get("low", -0.2))
        high = float(params.get("high", 0.2))
        if n < 0 or n > cells:
            raise InvalidParams("n_jumps must lie in [0, grid]")
        if not -1 < low <= high:
            raise InvalidParams("need -1 < low <= high")
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(np.arange(1, cells + 1), size=n, replace=False))
        times = list(idx * (T / cells))
        factors = 1.0 + rng.uniform(low, high, size=(n, d))
    knots_t = np.concatenate([[0.0], times])
    values = x0 * np.vstack([np.ones(d), np.cumprod(factors, axis=0)])
    if knots_t[-1] < T:
        knots_t = np.append(knots_t, T)
        values = np.vstack([values, values[-1]])
    return CadlagPath(knots_t, values, "constant")


def adversarial_zigzag(params: Mapping[str, Any], seed: int | None = None) -> CadlagPath:
    """Deterministic alternating up/down moves, out of phase across assets.

    Asset j is multiplied by ``1 + amplitude`` on steps where ``k + j`` is
    even and divided by it otherwise, so prices oscillate between two levels
    and no asset ever ends far ahead.  ``seed`` is accepted for interface
    uniformity and ignored.
    """
    d, T, steps, x0 = _common(params)
    a = float(params.get("amplitude", 0.1))
    if not a > 0:
        raise InvalidParams("amplitude must be positive")
    k = np.arange(steps)[:, None] + np.arange(d)[None, :]
    factors = np.where(k % 2 == 0, 1.0 + a, 1.0 / (1.0 + a))
    values = x0 * np.vstack([np.ones(d), np.cumprod(factors, axis=0)])
    return CadlagPath(np.linspace(0.0, T, steps + 1), values, "constant")


GENERATORS = {
    "gbm": gbm,
    "jump_diffusion": jump_diffusion,
    "step": step,
    "adversarial_zigzag": adversarial_zigzag,
}


def generate(kind: str, params: Mapping[str, Any] | None = None, seed: int | None = None) -> CadlagPath:
    try:
        fn = GENERATORS[kind]
    except KeyError:
        raise InvalidParams(f"unknown generator {kind!r}") from None
    return fn(dict(params or {}), seed)
