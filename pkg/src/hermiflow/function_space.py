"""Band-limited elements of L2 under the q-dimensional standard Gaussian.

A function is stored as a sparse map from multi-indices to coefficients in
the tensorized Hermite basis of the canonical frame.  Rotation, averaging
and spectral thresholding act shell by shell through the transportation
polytope formula, which keeps every operation an exact finite sum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor_index as ti
from .errors import (
    DegreeOutOfRange,
    DimensionMismatch,
    NormTooLarge,
    NotOrthogonal,
    NotOrthonormal,
    NotUnit,
)
from .hermite import HermiteEval

# Coefficients below this magnitude are dropped after every operation.
EPS_DROP = 1e-14

# Band limit accepted by this module; ridge targets of larger degree are
# handled in closed form by the landscape module and never materialized.
DEFAULT_DEGREE_CAP = 40


@dataclass(frozen=True)
class HermiteFunction:
    """Sparse Hermite expansion sum_beta coeffs[beta] * H_beta.

    Treated as immutable: operations return new instances and never mutate
    the coefficient map in place.
    """

    q: int
    coeffs: dict = field(default_factory=dict)

    @property
    def degree(self) -> int:
        return max((ti.degree(b) for b in self.coeffs), default=0)

    def norm2(self) -> float:
        """Squared L2 norm, sum of squared coefficients (Parseval)."""
        return float(sum(a * a for a in self.coeffs.values()))

    def norm(self) -> float:
        return float(np.sqrt(self.norm2()))

    def __add__(self, other: "HermiteFunction") -> "HermiteFunction":
        if self.q != other.q:
            raise DimensionMismatch(f"q mismatch: {self.q} vs {other.q}")
        out = dict(self.coeffs)
        for b, a in other.coeffs.items():
            out[b] = out.get(b, 0.0) + a
        return from_coeffs(self.q, out)

    def __sub__(self, other: "HermiteFunction") -> "HermiteFunction":
        return self + (other * -1.0)

    def __mul__(self, scalar: float) -> "HermiteFunction":
        return from_coeffs(
            self.q, {b: a * scalar for b, a in self.coeffs.items()}
        )

    __rmul__ = __mul__


def from_coeffs(q: int, coeffs, degree_cap: int = DEFAULT_DEGREE_CAP) -> HermiteFunction:
    """Build a HermiteFunction, validating indices and dropping tiny terms."""
    q = int(q)
    if q < 1:
        raise DimensionMismatch(f"q must be >= 1, got {q}")
    clean: dict = {}
    for beta, alpha in dict(coeffs).items():
        beta = ti.check_multi_index(beta)
        if len(beta) != q:
            raise DimensionMismatch(
                f"index {beta} has length {len(beta)}, expected {q}"
            )
        if ti.degree(beta) > degree_cap:
            raise DegreeOutOfRange(
                f"|{beta}| = {ti.degree(beta)} exceeds degree cap {degree_cap}"
            )
        a = float(alpha)
        if abs(a) > EPS_DROP:
            clean[beta] = clean.get(beta, 0.0) + a
    return HermiteFunction(q=q, coeffs=clean)


def zero(q: int) -> HermiteFunction:
    return HermiteFunction(q=q, coeffs={})


def basis(q: int, beta) -> HermiteFunction:
    """The tensorized Hermite basis element H_beta."""
    return from_coeffs(q, {tuple(beta): 1.0})


def inner(f: HermiteFunction, g: HermiteFunction) -> float:
    """L2 inner product E[f g], a coefficient dot product."""
    if f.q != g.q:
        raise DimensionMismatch(f"q mismatch: {f.q} vs {g.q}")
    small, large = (f.coeffs, g.coeffs) if len(f.coeffs) <= len(g.coeffs) else (g.coeffs, f.coeffs)
    return float(sum(a * large.get(b, 0.0) for b, a in small.items()))


def _shell_transform(f: HermiteFunction, A: np.ndarray) -> HermiteFunction:
    """Apply the degree-shell change of variables with matrix A (q_out x q_in).

    Computes, for every output index beta with |beta| = k, the coefficient
    sum over input indices gamma on the same shell of
    coeffs[gamma] * <P_A H_gamma, H_beta>.  For orthogonal A this is the
    exact rotated expansion; for a contraction it realizes the averaging
    operator, which acts within each harmonic shell.
    """
    q_out, q_in = A.shape
    if f.q != q_in:
        raise DimensionMismatch(f"matrix has {q_in} columns, f has q = {f.q}")
    shells: dict = {}
    for beta, alpha in f.coeffs.items():
        shells.setdefault(ti.degree(beta), []).append((beta, alpha))
    out: dict = {}
    for k, terms in shells.items():
        if k == 0:
            b0 = (0,) * q_out
            out[b0] = out.get(b0, 0.0) + terms[0][1]
            continue
        for beta_out in ti.enumerate_degree(q_out, k):
            total = 0.0
            for gamma, alpha in terms:
                total += alpha * ti.change_coefficient(A, beta_out, gamma)
            if abs(total) > EPS_DROP:
                out[beta_out] = out.get(beta_out, 0.0) + total
    return from_coeffs(q_out, out)


def rotate(f: HermiteFunction, U: np.ndarray) -> HermiteFunction:
    """Rotated expansion P_U f, i.e. the coefficients of f(U^T x).

    U must be orthogonal; the degree and the norm are preserved shell by
    shell.
    """
    U = np.asarray(U, dtype=float)
    if U.shape != (f.q, f.q):
        raise DimensionMismatch(f"U has shape {U.shape}, expected ({f.q}, {f.q})")
    if np.max(np.abs(U.T @ U - np.eye(f.q))) > 1e-10:
        raise NotOrthogonal("U^T U deviates from the identity beyond 1e-10")
    return _shell_transform(f, U)


def average(f: HermiteFunction, M: np.ndarray) -> HermiteFunction:
    """Averaging operator A_M f for a contraction M of shape (q_out, f.q).

    Realized through the harmonic representation: A_M preserves each degree
    shell and coincides there with the change of variables by M, so the
    polytope formula applies to M directly (the SVD route V, Lambda, U^T
    factorizes the same operator).
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[1] != f.q:
        raise DimensionMismatch(
            f"M has shape {M.shape}, expected (*, {f.q})"
        )
    op_norm = float(np.linalg.norm(M, 2)) if M.size else 0.0
    if op_norm > 1.0 + 1e-12:
        raise NormTooLarge(f"||M|| = {op_norm} exceeds 1 + 1e-12")
    return _shell_transform(f, M)


def pair_correlation(g: HermiteFunction, f: HermiteFunction, M: np.ndarray) -> float:
    """Correlation <g, A_M f> evaluated over support pairs only.

    Since the averaging operator acts within each degree shell, the value is
    a finite double sum over same-degree pairs of stored indices; nothing is
    materialized, which keeps loss and gradient evaluations cheap for sparse
    functions.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape != (g.q, f.q):
        raise DimensionMismatch(
            f"M has shape {M.shape}, expected ({g.q}, {f.q})"
        )
    by_shell: dict = {}
    for gamma, a in f.coeffs.items():
        by_shell.setdefault(ti.degree(gamma), []).append((gamma, a))
    total = 0.0
    for beta, b in g.coeffs.items():
        for gamma, a in by_shell.get(ti.degree(beta), ()):
            total += b * a * ti.change_coefficient(M, beta, gamma)
    return total


def complete_frame(W: np.ndarray, q: int) -> np.ndarray:
    """Extend a q x p orthonormal frame to a full orthogonal basis [W, Wperp]."""
    if W is None or W.size == 0:
        return np.eye(q)
    p = W.shape[1]
    if p == q:
        return W
    proj = np.eye(q) - W @ W.T
    # eigenvectors of the complement projector with eigenvalue one
    vals, vecs = np.linalg.eigh(proj)
    perp = vecs[:, vals > 0.5]
    # fix signs for determinism
    for j in range(perp.shape[1]):
        i = int(np.argmax(np.abs(perp[:, j])))
        if perp[i, j] < 0:
            perp[:, j] = -perp[:, j]
    return np.hstack([W, perp])


def threshold(f: HermiteFunction, W, s: int) -> HermiteFunction:
    """Spectral thresholding relative to the subspace spanned by W's columns.

    Rotates f into a basis adapted to [W, Wperp], zeroes every coefficient
    whose degree in the orthogonal-complement coordinates exceeds s, and
    rotates back.  W = None (or a q x 0 matrix) gives the plain band-limit
    projection onto degrees <= s.
    """
    if s < 0:
        raise DegreeOutOfRange(f"s must be >= 0, got {s}")
    if W is None:
        W = np.zeros((f.q, 0))
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != f.q:
        raise DimensionMismatch(f"W has shape {W.shape}, expected ({f.q}, p)")
    p = W.shape[1]
    if p and np.max(np.abs(W.T @ W - np.eye(p))) > 1e-10:
        raise NotOrthonormal("frame columns are not orthonormal within 1e-10")
    if p == 0:
        kept = {b: a for b, a in f.coeffs.items() if ti.degree(b) <= s}
        return from_coeffs(f.q, kept)
    O = complete_frame(W, f.q)
    g = rotate(f, O.T)  # coefficients of f in the adapted basis
    kept = {
        b: a for b, a in g.coeffs.items() if ti.partial_degree(b, p, f.q) <= s
    }
    return rotate(from_coeffs(f.q, kept), O)


def partial_derivative(f: HermiteFunction, axis: int) -> HermiteFunction:
    """Coordinate partial derivative; coefficient of H_beta in d_axis f is
    sqrt(beta_axis + 1) * coeffs[beta + e_axis]."""
    if not 0 <= axis < f.q:
        raise DimensionMismatch(f"axis {axis} outside [0, {f.q})")
    out: dict = {}
    for beta, alpha in f.coeffs.items():
        k = beta[axis]
        if k == 0:
            continue
        shifted = beta[:axis] + (k - 1,) + beta[axis + 1:]
        out[shifted] = out.get(shifted, 0.0) + np.sqrt(k) * alpha
    return from_coeffs(f.q, out)


def gradient(f: HermiteFunction) -> list:
    """All q coordinate partial derivatives."""
    return [partial_derivative(f, i) for i in range(f.q)]


def evaluate(f: HermiteFunction, x) -> np.ndarray:
    """Pointwise values sum_beta coeffs[beta] prod_i h_{beta_i}(x_i).

    x has shape (..., q); the result drops the last axis.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != f.q:
        raise DimensionMismatch(f"points have dimension {x.shape[-1]}, expected {f.q}")
    if not f.coeffs:
        return np.zeros(x.shape[:-1])
    deg = f.degree
    tables = HermiteEval(deg).eval_all(x)  # (..., q, deg+1)
    out = np.zeros(x.shape[:-1])
    for beta, alpha in f.coeffs.items():
        term = np.full(x.shape[:-1], alpha)
        for i, k in enumerate(beta):
            if k:
                term = term * tables[..., i, k]
        out += term
    return out


def ridge_coeffs(w, s: int, degree_cap: int = DEFAULT_DEGREE_CAP) -> HermiteFunction:
    """Expansion of the unit ridge h_s(w . x): multinomial(s; beta)^(1/2)
    times prod_i w_i^beta_i on the degree-s shell."""
    w = np.asarray(w, dtype=float).ravel()
    if abs(np.linalg.norm(w) - 1.0) > 1e-12:
        raise NotUnit(f"||w|| = {np.linalg.norm(w)} is not 1 within 1e-12")
    if s < 0:
        raise DegreeOutOfRange(f"degree must be >= 0, got {s}")
    q = len(w)
    from math import exp, lgamma

    coeffs = {}
    log_s_fact = lgamma(s + 1)
    for beta in ti.enumerate_degree(q, s):
        val = 1.0
        log_multi = log_s_fact
        for wi, bi in zip(w, beta):
            if bi:
                if wi == 0.0:
                    val = 0.0
                    break
                val *= wi ** bi
                log_multi -= lgamma(bi + 1)
        if val != 0.0:
            coeffs[beta] = exp(0.5 * log_multi) * val
    return from_coeffs(q, coeffs, degree_cap=degree_cap)


def to_text(f: HermiteFunction) -> str:
    """Serialize to the line format 'b1 ... bq alpha' with a header."""
    lines = [f"q={f.q} degree={f.degree}"]
    for beta in sorted(f.coeffs):
        alpha = f.coeffs[beta]
        lines.append(" ".join(str(b) for b in beta) + " " + repr(alpha))
    return "\n".join(lines) + "\n"


def from_text(text: str) -> HermiteFunction:
    """Parse the serialization produced by to_text; exact round trip."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("q="):
        raise ValueError("missing 'q=<int> degree=<int>' header")
    head = dict(part.split("=") for part in lines[0].split())
    q = int(head["q"])
    coeffs = {}
    for ln in lines[1:]:
        parts = ln.split()
        beta = tuple(int(p) for p in parts[:-1])
        if len(beta) != q:
            raise DimensionMismatch(f"index {beta} does not have length {q}")
        coeffs[beta] = float(parts[-1])
    return from_coeffs(q, coeffs)
