"""B-spline bases on lag windows and Gauss-Legendre quadrature.

The ``degree`` argument follows the order convention used by functional data
software: ``degree`` is the number of polynomial coefficients per knot span, so
``degree=4`` gives cubic pieces and ``K = interior_knots + degree`` functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Tuple

import numpy as np

from .errors import InvalidIntervalError, NumericError, OutOfDomainError

DEFAULT_NODES = 30


def _check_interval(interval) -> Tuple[float, float]:
    lo, hi = (float(v) for v in interval)
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
        raise InvalidIntervalError(f"interval [{lo}, {hi}] has non-positive length")
    return lo, hi


@dataclass(frozen=True)
class BasisSystem:
    """Clamped B-spline basis on a closed interval.

    Attributes
    ----------
    degree : int
        Spline order (polynomial degree + 1).
    interior_knot_count : int
        Number of equally spaced interior knots.
    interval : tuple of float
        Support ``(lo, hi)``.
    knot_vector : ndarray
        Knots with ``degree``-fold repeated boundary knots.
    """

    degree: int
    interior_knot_count: int
    interval: Tuple[float, float]
    knot_vector: np.ndarray

    @property
    def size(self) -> int:
        return self.interior_knot_count + self.degree

    def __call__(self, s):
        return eval_basis(self, s)


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def integrate(self, values: np.ndarray, axis: int = -1) -> np.ndarray:
        return np.tensordot(values, self.weights, axes=([axis], [0]))


def make_bspline_basis(degree: int, interior_knots: int, interval) -> BasisSystem:
    """Build the clamped B-spline basis with equally spaced interior knots."""
    if degree < 1:
        raise ValueError("degree must be >= 1")
    if interior_knots < 1:
        raise ValueError("interior_knots must be >= 1")
    lo, hi = _check_interval(interval)
    inner = np.linspace(lo, hi, interior_knots + 2)[1:-1]
    knots = np.concatenate([np.full(degree, lo), inner, np.full(degree, hi)])
    knots.setflags(write=False)
    return BasisSystem(degree, interior_knots, (lo, hi), knots)


def eval_basis(b: BasisSystem, s) -> np.ndarray:
    """Evaluate all basis functions at ``s``.

    Returns a vector of length ``K`` for scalar ``s`` and an ``(len(s), K)``
    matrix otherwise. Uses the triangular Cox-de Boor recurrence.
    """
    scalar = np.ndim(s) == 0
    x = np.atleast_1d(np.asarray(s, dtype=float))
    lo, hi = b.interval
    bad = (x < lo) | (x > hi) | ~np.isfinite(x)
    if bad.any():
        raise OutOfDomainError(f"s={x[bad][0]!r} outside basis interval [{lo}, {hi}]")

    t = b.knot_vector
    p = b.degree - 1
    K = b.size
    # span i satisfies t[i] <= x < t[i+1]; the right endpoint uses the last span
    span = np.searchsorted(t, x, side="right") - 1
    span = np.clip(span, p, K - 1)

    N = np.zeros((x.size, p + 1))
    N[:, 0] = 1.0
    left = np.zeros((x.size, p + 1))
    right = np.zeros((x.size, p + 1))
    for j in range(1, p + 1):
        left[:, j] = x - t[span + 1 - j]
        right[:, j] = t[span + j] - x
        saved = np.zeros(x.size)
        for r in range(j):
            temp = N[:, r] / (right[:, r + 1] + left[:, j - r])
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        N[:, j] = saved

    out = np.zeros((x.size, K))
    cols = span[:, None] - p + np.arange(p + 1)[None, :]
    np.put_along_axis(out, cols, N, axis=1)
    return out[0] if scalar else out


@lru_cache(maxsize=64)
def _leggauss(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(interval, node_count: int = DEFAULT_NODES) -> QuadratureRule:
    if node_count < 1:
        raise ValueError("node_count must be >= 1")
    lo, hi = _check_interval(interval)
    x, w = _leggauss(int(node_count))
    half = 0.5 * (hi - lo)
    return QuadratureRule(nodes=lo + half * (x + 1.0), weights=half * w)


def quadrature_integrate(
    f: Callable[[np.ndarray], np.ndarray], interval, nodes: int = DEFAULT_NODES
) -> float:
    """Gauss-Legendre approximation of the integral of ``f`` over ``interval``.

    ``f`` is called once with the full node array.
    """
    if nodes < 2:
        raise ValueError("nodes must be >= 2")
    rule = gauss_legendre(interval, nodes)
    values = np.broadcast_to(np.asarray(f(rule.nodes), dtype=float), rule.nodes.shape)
    bad = ~np.isfinite(values)
    if bad.any():
        loc = float(rule.nodes[bad][0])
        raise NumericError(f"integrand is not finite at node s={loc!r}", location=loc)
    return float(np.dot(values, rule.weights))


def basis_at_nodes(b: BasisSystem, node_count: int = DEFAULT_NODES):
    """Quadrature rule on the basis interval and the ``(nodes, K)`` basis table."""
    rule = gauss_legendre(b.interval, node_count)
    return rule, eval_basis(b, rule.nodes)
