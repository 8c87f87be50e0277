"""The corner simplex {b >= 0, sum b <= 1}: volume, sampling, quadrature, projection."""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidParams


def volume(m: int) -> float:
    """Lebesgue volume 1/m! of the m-dimensional corner simplex."""
    return 1.0 / math.factorial(m)


def uniform_points(n: int, m: int, rng: np.random.Generator | int | None = None) -> np.ndarray:
    """``n`` uniform points of the corner simplex in R^m, shape (n, m).

    Normalised exponential spacings give a flat Dirichlet point on the
    (m+1)-simplex; dropping the last coordinate leaves a uniform point of
    the corner simplex.
    """
    if n < 1 or m < 1:
        raise InvalidParams("need n >= 1 and m >= 1")
    rng = np.random.default_rng(rng)
    e = rng.standard_exponential((n, m + 1))
    return (e / e.sum(axis=1, keepdims=True))[:, :m]


def grid_nodes(m: int, per_axis: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Legendre rule mapped onto the simplex (Duffy collapse).

    Returns nodes (n, m) and weights summing to one, so ``w @ f(nodes)``
    approximates the uniform average of ``f`` over the simplex.
    """
    if not 1 <= m <= 3:
        raise InvalidParams("grid quadrature is only offered for m <= 3")
    if per_axis < 1:
        raise InvalidParams("per_axis must be >= 1")
    x, w = np.polynomial.legendre.leggauss(per_axis)
    u1 = 0.5 * (x + 1.0)
    w1 = 0.5 * w
    mesh = np.meshgrid(*([u1] * m), indexing="ij")
    U = np.stack([g.ravel() for g in mesh], axis=1)
    W = np.prod(np.stack([g.ravel() for g in np.meshgrid(*([w1] * m), indexing="ij")], axis=1), axis=1)
    B = np.empty_like(U)
    rest = np.ones(U.shape[0])
    jac = np.ones(U.shape[0])
    for k in range(m):
        B[:, k] = U[:, k] * rest
        jac *= rest
        rest = rest * (1.0 - U[:, k])
    wts = W * jac
    return B, wts / wts.sum()


def project_probability(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {b >= 0, sum b = 1} (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    tau = css[rho] / (rho + 1)
    return np.maximum(v - tau, 0.0)


def project(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the corner simplex {b >= 0, sum b <= 1}."""
    c = np.maximum(np.asarray(v, dtype=float), 0.0)
    if c.sum() <= 1.0:
        return c
    return project_probability(v)


def contains(B: np.ndarray, atol: float = 0.0) -> np.ndarray:
    B = np.atleast_2d(B)
    return np.all(B >= -atol, axis=1) & (B.sum(axis=1) <= 1.0 + atol)
