"""Orthonormal univariate Hermite polynomials under the standard Gaussian.

Normalized probabilists' convention throughout: h_0 = 1, h_1(x) = x and
sqrt(k+1) h_{k+1}(x) = x h_k(x) - sqrt(k) h_{k-1}(x), so that
E[h_j(X) h_k(X)] = delta_{jk} for X ~ N(0, 1).
"""

from __future__ import annotations

from functools import lru_cache
from math import comb, sqrt

import numpy as np

from .errors import DegreeOutOfRange


class HermiteEval:
    """Evaluator for h_0 .. h_max_degree via the three-term recurrence."""

    def __init__(self, max_degree: int):
        if max_degree < 0:
            raise DegreeOutOfRange(f"max_degree must be >= 0, got {max_degree}")
        self.max_degree = int(max_degree)
        self._sqrt = np.sqrt(np.arange(self.max_degree + 2))

    def eval(self, k: int, x: float) -> float:
        if not 0 <= k <= self.max_degree:
            raise DegreeOutOfRange(
                f"degree {k} outside [0, {self.max_degree}]"
            )
        return float(self.eval_all(np.asarray(x, dtype=float))[..., k])

    def eval_all(self, x: np.ndarray) -> np.ndarray:
        """Values h_0(x) .. h_max_degree(x), stacked on a trailing axis."""
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape + (self.max_degree + 1,))
        out[..., 0] = 1.0
        if self.max_degree >= 1:
            out[..., 1] = x
        for k in range(1, self.max_degree):
            out[..., k + 1] = (
                x * out[..., k] - self._sqrt[k] * out[..., k - 1]
            ) / self._sqrt[k + 1]
        return out


def eval_hermite(k: int, x) -> float:
    """Value of the orthonormal Hermite polynomial h_k at x."""
    return HermiteEval(max(k, 0)).eval(k, x)


@lru_cache(maxsize=None)
def product_coeffs(l: int, m: int) -> dict:
    """Linearization of a product: h_l h_m = sum_p B(l,m,p) h_{l+m-2p}.

    Returns the map p -> B(l, m, p) for 0 <= p <= min(l, m), with
    B(l,m,p) = sqrt(binom(l,p) binom(m,p) binom(l+m-2p, l-p)).
    """
    if l < 0 or m < 0:
        raise DegreeOutOfRange(f"degrees must be >= 0, got ({l}, {m})")
    return {
        p: sqrt(comb(l, p) * comb(m, p) * comb(l + m - 2 * p, l - p))
        for p in range(min(l, m) + 1)
    }


def derivative_shift(k: int) -> tuple:
    """Encode d/dx h_k = sqrt(k) h_{k-1} as (k-1, sqrt(k)); (0, 0.0) at k=0."""
    if k < 0:
        raise DegreeOutOfRange(f"degree must be >= 0, got {k}")
    if k == 0:
        return (0, 0.0)
    return (k - 1, sqrt(k))


@lru_cache(maxsize=None)
def gauss_hermite(n: int) -> tuple:
    """Gauss-Hermite nodes and weights for the standard Gaussian weight.

    Golub-Welsch on the Jacobi matrix of the orthonormal recurrence: the
    off-diagonal entries are sqrt(1), ..., sqrt(n-1).  Weights sum to one, so
    sum_i w_i f(x_i) approximates E[f(X)] for X ~ N(0, 1), exactly for
    polynomials of degree <= 2n - 1.
    """
    if n < 1:
        raise ValueError(f"need n >= 1 nodes, got {n}")
    if n == 1:
        return np.zeros(1), np.ones(1)
    off = np.sqrt(np.arange(1, n, dtype=float))
    jacobi = np.diag(off, 1) + np.diag(off, -1)
    nodes, vecs = np.linalg.eigh(jacobi)
    weights = vecs[0, :] ** 2
    return nodes, weights


def gauss_hermite_for_degree(max_degree: int) -> tuple:
    """Default rule for working up to max_degree: 2*max_degree + 1 nodes,
    exact for all products of two polynomials of that degree."""
    return gauss_hermite(2 * max_degree + 1)
