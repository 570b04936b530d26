"""Structural analysis of a target: support, energies and the leap cascade.

The gradient Gram matrix determines the intrinsic dimension and support of a
function; iterated relative spectral filtering then produces the nested
sequence of supports and leap exponents that schedules the saddle-to-saddle
dynamics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import function_space as fs
from . import tensor_index as ti
from .errors import ZeroFunction

DEFAULT_TOL = 1e-9


def gradient_gram(f: fs.HermiteFunction) -> np.ndarray:
    """Gram matrix of the coordinate partial derivatives, entry (i, j) being
    the inner product of d_i f and d_j f.  Symmetric PSD."""
    grads = fs.gradient(f)
    q = f.q
    G = np.empty((q, q))
    for i in range(q):
        for j in range(i, q):
            G[i, j] = G[j, i] = fs.inner(grads[i], grads[j])
    return G


def _canonicalize(frame: np.ndarray) -> np.ndarray:
    """Fix column signs: largest-magnitude entry positive, ties by index."""
    out = frame.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        i = int(np.argmax(np.abs(col) - 1e-15 * np.arange(len(col))))
        if col[i] < 0:
            out[:, j] = -col
    return out


def intrinsic_dimension(f: fs.HermiteFunction, tol: float = DEFAULT_TOL):
    """Rank and span of the gradient Gram matrix.

    Returns (dim, support) with support a q x dim orthonormal frame whose
    columns are the Gram eigenvectors above tol * lambda_max, ordered by
    decreasing eigenvalue and sign-canonicalized.
    """
    if not f.coeffs:
        raise ZeroFunction("intrinsic dimension of the zero function")
    G = gradient_gram(f)
    vals, vecs = np.linalg.eigh(G)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    if vals[0] <= 0:
        # constant function: zero gradient
        return 0, np.zeros((f.q, 0))
    keep = vals > tol * vals[0]
    dim = int(keep.sum())
    return dim, _canonicalize(vecs[:, :dim])


def projection_energy(f: fs.HermiteFunction, W: np.ndarray) -> float:
    """Energy of f captured by the subspace spanned by W's columns,
    the squared norm of the orthogonal projection Pi_W f."""
    if W is None or W.size == 0:
        c0 = f.coeffs.get((0,) * f.q, 0.0)
        return c0 * c0
    G = W @ W.T
    return fs.pair_correlation(f, f, G)


def _projection_grad_W(f: fs.HermiteFunction, grads, W: np.ndarray) -> np.ndarray:
    """Euclidean gradient of W -> ||Pi_W f||^2, equal to 2 * grad_G * W."""
    G = W @ W.T
    q = f.q
    bar = np.empty((q, q))
    for i in range(q):
        for j in range(i, q):
            bar[i, j] = bar[j, i] = fs.pair_correlation(grads[i], grads[j], G)
    return 2.0 * bar @ W


def minimal_energy(
    f: fs.HermiteFunction,
    p: int,
    restarts: int = 32,
    iters: int = 200,
    seed: int = 0,
) -> float:
    """Minimal energy E_p(f): squared distance from f to the functions of
    intrinsic dimension at most p.

    Equal to ||f||^2 minus the supremum of ||Pi_W f||^2 over p-dimensional
    subspaces, computed by multi-start projected gradient ascent on the
    Grassmannian with QR retraction and backtracking.
    """
    q = f.q
    if not 0 <= p < q:
        raise ValueError(f"need 0 <= p < q, got p={p}, q={q}")
    total = f.norm2()
    if p == 0:
        return total - projection_energy(f, None)
    dim, _ = intrinsic_dimension(f)
    if dim <= p:
        return 0.0
    grads = fs.gradient(f)
    rng = np.random.default_rng(seed)
    best = -np.inf
    for _ in range(restarts):
        W, _ = np.linalg.qr(rng.normal(size=(q, p)))
        val = projection_energy(f, W)
        step = 1.0
        for _ in range(iters):
            euc = _projection_grad_W(f, grads, W)
            tang = euc - W @ (W.T @ euc)
            gnorm2 = float(np.sum(tang * tang))
            if gnorm2 < 1e-22:
                break
            improved = False
            while step > 1e-14:
                Wn, R = np.linalg.qr(W + step * tang)
                Wn = Wn * np.sign(np.diag(R))
                vn = projection_energy(f, Wn)
                # Armijo sufficient-increase condition
                if vn > val + 0.25 * step * gnorm2:
                    improved = True
                    break
                step *= 0.5
            if not improved:
                break
            W, val = Wn, vn
            step = min(step * 2.0, 8.0)
        best = max(best, val)
    return max(total - best, 0.0)


def relative_info_exponent(
    f: fs.HermiteFunction, W, tol: float = DEFAULT_TOL
) -> int:
    """Smallest positive Hermite degree of f in the directions orthogonal to
    span(W): the tail degree of the lowest harmonic not yet captured by the
    subspace.

    Returns 0 when no energy lives outside span(W) (in particular for a full
    frame).  W = None stands for the trivial subspace, recovering the plain
    information exponent.
    """
    if not f.coeffs:
        raise ZeroFunction("information exponent of the zero function")
    if W is None:
        W = np.zeros((f.q, 0))
    W = np.asarray(W, dtype=float)
    p = W.shape[1] if W.ndim == 2 else 0
    if p == 0:
        g = f
    elif p == f.q:
        return 0
    else:
        O = fs.complete_frame(W, f.q)
        g = fs.rotate(f, O.T)
    floor = tol * f.norm()
    tails = [
        t
        for beta, alpha in g.coeffs.items()
        if abs(alpha) > floor and (t := ti.partial_degree(beta, p, f.q)) > 0
    ]
    return int(min(tails)) if tails else 0


@dataclass(frozen=True)
class CascadeStage:
    """One step of the fine-grained filtering sequence."""

    f: fs.HermiteFunction
    support: np.ndarray  # q x p frame
    s: int  # relative information exponent that revealed this stage
    p: int  # intrinsic dimension reached


@dataclass(frozen=True)
class RegroupedStage:
    """Maximal run of fine stages indistinguishable at their timescale."""

    f: fs.HermiteFunction
    support: np.ndarray
    s: int  # exponent of the head stage, strictly increasing across groups
    p: int
    b: int  # number of fine cascades merged into this group


@dataclass(frozen=True)
class CascadeReport:
    stages: list = field(default_factory=list)
    regrouped: list = field(default_factory=list)
    s_star: int = 0

    @property
    def fine_exponents(self):
        return [st.s for st in self.stages]

    @property
    def fine_dimensions(self):
        return [st.p for st in self.stages]

    @property
    def regrouped_exponents(self):
        return [st.s for st in self.regrouped]

    @property
    def regrouped_dimensions(self):
        return [st.p for st in self.regrouped]

    @property
    def cascade_counts(self):
        return [st.b for st in self.regrouped]

    def to_json(self) -> str:
        def stage_record(st):
            rec = {
                "s": st.s,
                "p": st.p,
                "support_columns": [list(col) for col in st.support.T],
                "coeff_summary": {
                    "norm2": st.f.norm2(),
                    "n_coeffs": len(st.f.coeffs),
                    "degree": st.f.degree,
                },
            }
            if isinstance(st, RegroupedStage):
                rec["b"] = st.b
            return rec

        return json.dumps(
            {
                "stages": [stage_record(st) for st in self.stages],
                "regrouped": [stage_record(st) for st in self.regrouped],
                "s_star": self.s_star,
            },
            indent=2,
        )


def _extend_frame(prev: np.ndarray, span: np.ndarray, q: int) -> np.ndarray:
    """Nested support frame [prev | new]: orthonormal basis of span(span)
    whose first columns are prev."""
    if prev.shape[1] == 0:
        return _canonicalize(span)
    proj = span - prev @ (prev.T @ span)
    u, sing, _ = np.linalg.svd(proj, full_matrices=False)
    new = u[:, sing > 1e-9]
    return np.hstack([prev, _canonicalize(new)])


def leap_decomposition(
    f: fs.HermiteFunction, tol: float = DEFAULT_TOL
) -> CascadeReport:
    """Iterated relative spectral filtering of a target.

    Produces the fine-grained stages (f_k, W_k, s_k, p_k) where each f_{k+1}
    filters f at the exponent relative to the previous support, and the
    regrouped stages in which consecutive fine stages are merged while their
    exponent does not exceed the exponent that opened the group; the merged
    exponents then increase strictly.  Targets of deficient intrinsic
    dimension are analyzed inside their own support.
    """
    if not f.coeffs:
        raise ZeroFunction("cascade of the zero function")
    q_full = intrinsic_dimension(f, tol)[0]

    stages = []
    W = np.zeros((f.q, 0))
    guard = 0
    while W.shape[1] < q_full:
        s_k = relative_info_exponent(f, W, tol)
        f_k = fs.threshold(f, W if W.shape[1] else None, s_k)
        _, span = intrinsic_dimension(f_k, tol)
        W = _extend_frame(W, span, f.q)
        stages.append(CascadeStage(f=f_k, support=W, s=s_k, p=W.shape[1]))
        guard += 1
        if guard > f.degree + q_full + 2:
            raise RuntimeError("cascade failed to terminate")

    regrouped = []
    i = 0
    while i < len(stages):
        head = stages[i].s
        j = i + 1
        while j < len(stages) and stages[j].s <= head:
            j += 1
        last = stages[j - 1]
        regrouped.append(
            RegroupedStage(
                f=last.f, support=last.support, s=head, p=last.p, b=j - i
            )
        )
        i = j

    s_star = max(st.s for st in stages)
    return CascadeReport(stages=stages, regrouped=regrouped, s_star=s_star)
