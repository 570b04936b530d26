"""Multi-index arithmetic and transportation-polytope combinatorics.

A multi-index is represented as a plain tuple of nonnegative ints, so it can
be used directly as a dict key and compares entrywise.  The transportation
polytope Pi(beta, gamma) collects the nonnegative integer matrices T with
row sums gamma and column sums beta; its lattice points and their weights
drive every change of Hermite basis in the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb, lgamma, exp

import numpy as np

from .errors import DegreeMismatch

MultiIndex = tuple  # tuple[int, ...]; alias for documentation purposes


def check_multi_index(beta) -> tuple:
    """Validate and normalize a multi-index to a tuple of nonnegative ints."""
    out = tuple(int(b) for b in beta)
    if any(b < 0 for b in out):
        raise ValueError(f"multi-index entries must be >= 0, got {beta}")
    return out


def degree(beta) -> int:
    """Total degree |beta|."""
    return int(sum(beta))


def partial_degree(beta, start: int, stop: int) -> int:
    """Partial degree: sum of entries[start:stop] (Python slice semantics)."""
    return int(sum(beta[start:stop]))


def count_degree(q: int, k: int) -> int:
    """Number of q-tuples of nonnegative ints summing to k: binom(k+q-1, k)."""
    return comb(k + q - 1, k)


def enumerate_degree(q: int, k: int) -> list:
    """All multi-indices beta in N^q with |beta| = k, in lexicographic order.

    The returned list has length binom(k+q-1, k).
    """
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    if q == 1:
        return [(k,)]
    out = []
    for first in range(k + 1):
        for rest in enumerate_degree(q - 1, k - first):
            out.append((first,) + rest)
    return out


@dataclass(frozen=True)
class TransportMatrix:
    """Lattice point of the transportation polytope Pi(beta, gamma).

    entries[i][j] is a nonnegative integer; row i sums to gamma[i] and
    column j sums to beta[j].
    """

    entries: tuple
    row_sums: tuple  # gamma
    col_sums: tuple  # beta

    def array(self) -> np.ndarray:
        return np.array(self.entries, dtype=np.int64)


def _fill_rows(row_sums, col_budget, row_idx, current, out):
    """Recursively fill rows; col_budget tracks the remaining column sums."""
    if row_idx == len(row_sums):
        if all(b == 0 for b in col_budget):
            out.append(tuple(current))
        return
    target = row_sums[row_idx]
    ncols = len(col_budget)

    def fill_row(col_idx, remaining, row_acc):
        if col_idx == ncols - 1:
            if remaining <= col_budget[col_idx]:
                row = row_acc + (remaining,)
                new_budget = tuple(
                    col_budget[j] - row[j] for j in range(ncols)
                )
                current.append(row)
                _fill_rows(row_sums, new_budget, row_idx + 1, current, out)
                current.pop()
            return
        # prune: the tail of the row cannot exceed the tail column budget
        tail_budget = sum(col_budget[col_idx + 1:])
        lo = max(0, remaining - tail_budget)
        hi = min(remaining, col_budget[col_idx])
        for v in range(lo, hi + 1):
            fill_row(col_idx + 1, remaining - v, row_acc + (v,))

    fill_row(0, target, ())


@lru_cache(maxsize=None)
def _lattice_points(row_sums: tuple, col_sums: tuple) -> tuple:
    """All nonnegative integer matrices with the given row and column sums."""
    if sum(row_sums) != sum(col_sums):
        return ()
    out: list = []
    _fill_rows(row_sums, col_sums, 0, [], out)
    return tuple(out)


def transport_polytope(beta, gamma) -> list:
    """Lattice points of Pi(beta, gamma): row sums gamma, column sums beta."""
    beta = check_multi_index(beta)
    gamma = check_multi_index(gamma)
    if degree(beta) != degree(gamma):
        raise DegreeMismatch(
            f"|beta| = {degree(beta)} != |gamma| = {degree(gamma)}"
        )
    return [
        TransportMatrix(entries=pt, row_sums=gamma, col_sums=beta)
        for pt in _lattice_points(gamma, beta)
    ]


def _log_multinomial(total: int, parts) -> float:
    """log of the multinomial coefficient total! / prod(parts!)."""
    return lgamma(total + 1) - sum(lgamma(p + 1) for p in parts)


def polytope_weight(T: TransportMatrix) -> float:
    """Combinatorial weight Q(T; beta, gamma).

    Product over rows of the multinomial coefficient of the row (with top
    gamma_i) and over columns of the multinomial of the column (top beta_j).
    Evaluated through log-gamma so high degrees do not overflow.
    """
    gamma, beta = T.row_sums, T.col_sums
    rows = T.entries
    log_q = 0.0
    for i, g in enumerate(gamma):
        log_q += _log_multinomial(g, rows[i])
    for j, b in enumerate(beta):
        col = tuple(rows[i][j] for i in range(len(gamma)))
        log_q += _log_multinomial(b, col)
    return exp(log_q)


@lru_cache(maxsize=None)
def change_terms(beta: tuple, gamma: tuple):
    """Precomputed terms of the basis-change coefficient <P_A H_gamma, H_beta>.

    Returns (S, sqrt_q) where S is an int array of shape (m, len(beta),
    len(gamma)) stacking the lattice points with row sums beta and column
    sums gamma, and sqrt_q the corresponding Q(S)^(1/2) weights, so that the
    coefficient for a matrix A (len(beta) x len(gamma)) is
    sum_m sqrt_q[m] * prod_ij A[i,j]**S[m,i,j].
    """
    pts = _lattice_points(beta, gamma)
    if not pts:
        return (
            np.zeros((0, len(beta), len(gamma)), dtype=np.int64),
            np.zeros(0),
        )
    S = np.array(pts, dtype=np.int64)
    sqrt_q = np.empty(len(pts))
    for m, pt in enumerate(pts):
        log_q = 0.0
        for i, b in enumerate(beta):
            log_q += _log_multinomial(b, pt[i])
        for j, g in enumerate(gamma):
            col = tuple(pt[i][j] for i in range(len(beta)))
            log_q += _log_multinomial(g, col)
        sqrt_q[m] = exp(0.5 * log_q)
    return S, sqrt_q


@lru_cache(maxsize=None)
def _change_terms_sparse(beta: tuple, gamma: tuple) -> tuple:
    """Lattice terms as (sqrt_q, ((i, j, exponent), ...)) per point."""
    S, sqrt_q = change_terms(beta, gamma)
    out = []
    for m in range(len(sqrt_q)):
        nz = [
            (i, j, int(S[m, i, j]))
            for i in range(S.shape[1])
            for j in range(S.shape[2])
            if S[m, i, j]
        ]
        out.append((float(sqrt_q[m]), tuple(nz)))
    return tuple(out)


def change_coefficient(A, beta: tuple, gamma: tuple) -> float:
    """Coefficient <P_A H_gamma, H_beta> for |beta| = |gamma|.

    A has shape (len(beta), len(gamma)); entry (i, j) couples output
    coordinate i to input coordinate j.  Valid for arbitrary real A when the
    degrees match (the same formula realizes the averaging operator shell by
    shell).
    """
    total = 0.0
    for sq, powers in _change_terms_sparse(beta, gamma):
        v = sq
        for i, j, e in powers:
            a = A[i, j]
            v *= a if e == 1 else a**e
        total += v
    return total
