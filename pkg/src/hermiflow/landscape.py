"""Population losses and manifold gradients for the joint and planted models.

The joint (Grassmannian) model carries the correlation <A_G f, f> with
G = M M^T, whose gradient in G is a PSD matrix; the planted (Stiefel) model
carries <f, A_M f> directly.  Ridge sums of large degree never materialize
coefficients: their correlations and gradients use the closed form
E[h_s(v.z) h_s(v'.z)] = (v.v')^s.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import function_space as fs
from .errors import (
    DimensionMismatch,
    InfeasibleN,
    NotOrthonormal,
    NotUnit,
    OddDegreeWithReflection,
    UnsupportedTargetKind,
)

FRAME_TOL = 1e-10


def check_frame(W: np.ndarray, name: str = "frame") -> np.ndarray:
    """Validate orthonormal columns within 1e-10."""
    W = np.asarray(W, dtype=float)
    if W.ndim != 2:
        raise DimensionMismatch(f"{name} must be a matrix, got shape {W.shape}")
    r = W.shape[1]
    if np.max(np.abs(W.T @ W - np.eye(r))) > FRAME_TOL:
        raise NotOrthonormal(f"{name} columns are not orthonormal within {FRAME_TOL}")
    return W


@dataclass(frozen=True)
class SummaryStatistics:
    """Correlation M = Wstar^T W with its SVD triple and G = M M^T."""

    M: np.ndarray
    V: np.ndarray  # q x q orthogonal, left singular vectors
    lam: np.ndarray  # q singular values, nonincreasing, in [0, 1]
    U: np.ndarray  # r x q orthonormal, right singular vectors
    G: np.ndarray  # q x q PSD

    @property
    def q(self) -> int:
        return self.M.shape[0]

    @property
    def r(self) -> int:
        return self.M.shape[1]


def summary(Wstar: np.ndarray, W: np.ndarray, validate: bool = True) -> SummaryStatistics:
    """Summary statistics of the pair (Wstar, W).

    Singular values are clamped to [0, 1] (they can exceed 1 only by
    round-off) and sorted nonincreasing; each left singular vector has its
    largest-magnitude entry positive, ties broken by index, with the right
    vector flipped accordingly.  validate=False skips the orthonormality
    check on hot paths where frames come from a QR retraction.
    """
    if validate:
        Wstar = check_frame(Wstar, "Wstar")
        W = check_frame(W, "W")
    if Wstar.shape[0] != W.shape[0]:
        raise DimensionMismatch(
            f"ambient dimensions differ: {Wstar.shape[0]} vs {W.shape[0]}"
        )
    q, r = Wstar.shape[1], W.shape[1]
    if q > r:
        raise DimensionMismatch(f"need rank(Wstar) = q <= rank(W) = r, got {q} > {r}")
    M = Wstar.T @ W
    V, lam, Uh = np.linalg.svd(M, full_matrices=False)
    lam = np.clip(lam, 0.0, 1.0)
    U = Uh.T
    for j in range(q):
        col = V[:, j]
        i = int(np.argmax(np.abs(col) - 1e-15 * np.arange(q)))
        if col[i] < 0:
            V[:, j] = -col
            U[:, j] = -U[:, j]
    G = (V * lam**2) @ V.T
    return SummaryStatistics(M=M, V=V, lam=lam, U=U, G=0.5 * (G + G.T))


@dataclass(frozen=True)
class Target:
    """Learning target: coefficient-based, ridge-sum, or mixed.

    A ridge sum is sum_j Z[j] h_s(w_j . x) with unit directions w_j stored
    as the columns of `dirs`.  A mixed target combines a coefficient part f
    with a ridge part g; `eps` weights the ridge correlation in the loss,
    matching the additive decomposition <A f, f> + eps <A g, g> across
    disjoint harmonics.
    """

    kind: str  # "coeffs" | "ridge" | "mixed"
    f: fs.HermiteFunction = None
    ridge_Z: np.ndarray = None
    ridge_dirs: np.ndarray = None  # q x N, unit columns
    ridge_s: int = 0
    eps: float = 1.0
    _grads: list = field(default_factory=list, compare=False, repr=False)
    _pairs: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def q(self) -> int:
        return self.f.q if self.f is not None else self.ridge_dirs.shape[0]

    def grads(self) -> list:
        """Cached coordinate partial derivatives of the coefficient part."""
        if self.f is not None and not self._grads:
            self._grads.extend(fs.gradient(self.f))
        return self._grads

    def pair_terms(self, key) -> tuple:
        """Cached same-shell support pairs of (g_a, g_b) as (beta, gamma, w).

        key is "self" for the target against itself, or (i, j) for a pair of
        its partial derivatives; the correlation against a matrix A is then
        sum of w * <P_A H_gamma, H_beta>.
        """
        if key not in self._pairs:
            if key == "self":
                ga = gb = self.f
            else:
                grads = self.grads()
                ga, gb = grads[key[0]], grads[key[1]]
            terms = []
            for beta, a in ga.coeffs.items():
                db = sum(beta)
                for gamma, b in gb.coeffs.items():
                    if sum(gamma) == db:
                        terms.append((beta, gamma, a * b))
            self._pairs[key] = tuple(terms)
        return self._pairs[key]


def coefficient_target(f: fs.HermiteFunction) -> Target:
    return Target(kind="coeffs", f=f)


def _check_ridge(Z, dirs, s):
    Z = np.asarray(Z, dtype=float).ravel()
    dirs = np.asarray(dirs, dtype=float)
    if dirs.ndim != 2 or dirs.shape[1] != len(Z):
        raise DimensionMismatch(
            f"dirs must have shape (q, {len(Z)}), got {dirs.shape}"
        )
    norms = np.linalg.norm(dirs, axis=0)
    if np.max(np.abs(norms - 1.0)) > 1e-12:
        raise NotUnit("ridge directions must be unit vectors")
    if s < 1:
        raise ValueError(f"ridge degree must be >= 1, got {s}")
    return Z, dirs, int(s)


def ridge_target(Z, dirs, s: int) -> Target:
    Z, dirs, s = _check_ridge(Z, dirs, s)
    return Target(kind="ridge", ridge_Z=Z, ridge_dirs=dirs, ridge_s=s)


def mixed_target(f: fs.HermiteFunction, Z, dirs, s: int, eps: float) -> Target:
    Z, dirs, s = _check_ridge(Z, dirs, s)
    if f.q != dirs.shape[0]:
        raise DimensionMismatch("coefficient and ridge parts disagree on q")
    return Target(kind="mixed", f=f, ridge_Z=Z, ridge_dirs=dirs, ridge_s=s, eps=eps)


def target_grad_norm2(target: Target) -> float:
    """Squared L2 norm of the target's gradient field, used for step sizing."""
    total = 0.0
    if target.f is not None:
        total += sum(g.norm2() for g in target.grads())
    if target.ridge_Z is not None:
        Z, D, s = target.ridge_Z, target.ridge_dirs, target.ridge_s
        C = D.T @ D
        total += target.eps * s * float(Z @ (C**s) @ Z)
    return total


def _ridge_corr(target: Target, M: np.ndarray) -> float:
    """sum_jj' Z_j Z_j' (w_j^T M w_j')^s."""
    Z, D, s = target.ridge_Z, target.ridge_dirs, target.ridge_s
    C = D.T @ M @ D
    return float(Z @ (C**s) @ Z)


def _ridge_grad_M(target: Target, M: np.ndarray) -> np.ndarray:
    """d/dM of the ridge correlation: s sum ZZ' (w^T M w')^{s-1} w w'^T."""
    Z, D, s = target.ridge_Z, target.ridge_dirs, target.ridge_s
    C = D.T @ M @ D
    K = s * (C ** (s - 1)) * np.outer(Z, Z)
    return D @ K @ D.T


def _pair_sum(target: Target, key, A: np.ndarray) -> float:
    from .tensor_index import change_coefficient

    return sum(
        w * change_coefficient(A, beta, gamma)
        for beta, gamma, w in target.pair_terms(key)
    )


def grassmann_loss(target: Target, S: SummaryStatistics) -> float:
    """Joint-model correlation <A_G f, f> = sum_beta alpha_beta(V)^2 lambda_beta^2."""
    if target.kind == "ridge":
        raise UnsupportedTargetKind(
            "pure ridge targets use the planted path; the joint loss needs a "
            "coefficient part"
        )
    total = _pair_sum(target, "self", S.G)
    if target.kind == "mixed":
        total += target.eps * _ridge_corr(target, S.G)
    return total


def grassmann_grad_G(target: Target, S: SummaryStatistics) -> np.ndarray:
    """Gradient of the joint-model correlation with respect to G.

    Equals the Gram matrix E[grad f (A_G grad f)^T]; symmetric PSD at every
    point of the PSD unit ball.
    """
    if target.kind == "ridge":
        raise UnsupportedTargetKind(
            "pure ridge targets use the planted path; the joint gradient "
            "needs a coefficient part"
        )
    q = target.q
    bar = np.empty((q, q))
    for i in range(q):
        for j in range(i, q):
            bar[i, j] = bar[j, i] = _pair_sum(target, (i, j), S.G)
    if target.kind == "mixed":
        bar = bar + target.eps * _ridge_grad_M(target, S.G)
    return 0.5 * (bar + bar.T)


def grassmann_flow_field(
    target: Target, Wstar: np.ndarray, W: np.ndarray, validate: bool = True
) -> np.ndarray:
    """Grassmann ascent field (I - W W^T) 2 Wstar grad_G M; tangent to W."""
    S = summary(Wstar, W, validate=validate)
    bar = grassmann_grad_G(target, S)
    field = 2.0 * Wstar @ (bar @ S.M)
    return field - W @ (W.T @ field)


def planted_loss(target: Target, S: SummaryStatistics) -> float:
    """Planted-model correlation <f, A_M f> (coefficient part) plus
    eps times the ridge correlation, which add across disjoint harmonics."""
    if S.q != S.r:
        raise DimensionMismatch("planted model requires q = r")
    total = 0.0
    if target.f is not None:
        total += _pair_sum(target, "self", S.M)
    if target.ridge_Z is not None:
        w = target.eps if target.kind == "mixed" else 1.0
        total += w * _ridge_corr(target, S.M)
    return total


def planted_grad_M(target: Target, M: np.ndarray) -> np.ndarray:
    """Gradient of the planted correlation with respect to M:
    E[grad f (A_M grad f)^T] plus the ridge closed form."""
    q = M.shape[0]
    out = np.zeros((q, q))
    if target.f is not None:
        for i in range(q):
            for j in range(q):
                out[i, j] += _pair_sum(target, (i, j), M)
    if target.ridge_Z is not None:
        w = target.eps if target.kind == "mixed" else 1.0
        out += w * _ridge_grad_M(target, M)
    return out


def stiefel_flow_field(
    target: Target, Wstar: np.ndarray, W: np.ndarray, validate: bool = True
) -> np.ndarray:
    """Stiefel ascent field Fbar - W Fbar^T W with Fbar = Wstar grad_M."""
    S = summary(Wstar, W, validate=validate)
    if S.q != S.r:
        raise DimensionMismatch("planted model requires q = r")
    Fbar = Wstar @ planted_grad_M(target, S.M)
    return Fbar - W @ (Fbar.T @ W)


@dataclass(frozen=True)
class CriticalReport:
    tau: int  # count of singular values at one
    tau_prime: int  # count strictly between zero and one
    sp: np.ndarray  # V columns with lambda >= 1 - tol
    ess: np.ndarray  # V columns with tol < lambda < 1 - tol
    is_vertex: bool  # all singular values in {0, 1}
    unstable: bool  # near-degenerate spectrum, V columns unreliable


def classify_critical(S: SummaryStatistics, tol: float) -> CriticalReport:
    """Vertex pattern of the summary spectrum: how many singular values sit
    at one, how many in the open interval, and the associated subspaces."""
    lam = S.lam
    top = lam >= 1.0 - tol
    mid = (lam > tol) & (lam < 1.0 - tol)
    gaps = np.abs(np.diff(lam))
    return CriticalReport(
        tau=int(top.sum()),
        tau_prime=int(mid.sum()),
        sp=S.V[:, top],
        ess=S.V[:, mid],
        is_vertex=bool(mid.sum() == 0),
        unstable=bool(gaps.size and gaps.min() < 1e-8),
    )


def lambda_rate(model: str, target: Target, S: SummaryStatistics) -> np.ndarray:
    """Diagnostic value of the summary ODE (1 - lambda^2) * dl/dlambda.

    Evaluated along a W-trajectory; time integration happens on W itself
    because the eigenvector equations are singular at spectral collisions.
    """
    lam = S.lam
    q = len(lam)
    eps = 1e-4
    rate = np.empty(q)
    for i in range(q):
        lp = lam.copy()
        lm = lam.copy()
        lp[i] += eps
        lm[i] -= eps
        rate[i] = (_loss_of_lam(model, target, S, lp) - _loss_of_lam(model, target, S, lm)) / (2 * eps)
    return (1.0 - lam**2) * rate


def _loss_of_lam(model, target, S, lam):
    M = (S.V * lam) @ S.U.T
    G = (S.V * lam**2) @ S.V.T
    Sm = SummaryStatistics(M=M, V=S.V, lam=lam, U=S.U, G=G)
    return grassmann_loss(target, Sm) if model == "grassmann" else planted_loss(target, Sm)


def roots_of_unity(N: int) -> np.ndarray:
    """Unit directions (cos(2 pi j / N), sin(2 pi j / N)), j = 0..N-1, as columns."""
    ang = 2.0 * np.pi * np.arange(N) / N
    return np.vstack([np.cos(ang), np.sin(ang)])


def autocorrelation_phi(Z, s: int, theta: float, reflection: bool = False) -> float:
    """Autocorrelation of the ridge sum over N-th roots of unity:
    sum_jj' Z_j Z_j' cos(theta + 2 pi (j - j') / N)^s.

    With reflection=True the mirror branch is evaluated (j - j' becomes
    j + j'); it requires even degree.
    """
    if reflection and s % 2 != 0:
        raise OddDegreeWithReflection(
            "reflection branch requires an even ridge degree"
        )
    Z = np.asarray(Z, dtype=float).ravel()
    N = len(Z)
    j = np.arange(N)
    diff = j[:, None] + j[None, :] if reflection else j[:, None] - j[None, :]
    C = np.cos(theta + 2.0 * np.pi * diff / N) ** s
    return float(Z @ C @ Z)


def negative_autocorrelation_sequence(N: int, eta: float = None) -> np.ndarray:
    """Even real sequence whose circular autocorrelation is strictly negative
    away from lags 0 and N/2.

    Built in Fourier space: the power spectrum is a positive combination of
    the flat spectrum and negatively weighted cosine harmonics, then the
    sequence is the inverse transform of its square root.  The construction
    is verified before returning.
    """
    if N % 2 != 0 or N < 4:
        raise InfeasibleN(f"need even N >= 4, got {N}")
    M = N // 2
    if eta is None:
        eta = 1.0 / (4.0 * N)
    if not 0 < eta < 1.0 / (2.0 * M):
        raise InfeasibleN(f"eta must lie in (0, {1.0/(2*M)}), got {eta}")
    delta = np.sqrt((2.0 * eta - eta * eta) / (M - 1))
    omega = np.arange(N)
    # unit-norm even cosine vectors over the frequency axis
    c_list = []
    for k in range(M):
        v = np.cos(2.0 * np.pi * omega * k / N)
        c_list.append(v / np.linalg.norm(v))
    P = (1.0 - eta) * c_list[0]
    for k in range(1, M):
        P = P - delta * c_list[k]
    if P.min() <= 0:
        raise InfeasibleN(
            f"power spectrum not positive for N={N}, eta={eta}; decrease eta"
        )
    Zhat = np.sqrt(P)
    Z = np.real(np.fft.ifft(Zhat))
    phi = np.array(
        [float(np.dot(Z, np.roll(Z, -k))) for k in range(N)]
    )
    bad = [k for k in range(N) if k not in (0, N // 2) and phi[k] >= 0]
    if bad:
        raise InfeasibleN(f"construction failed: nonnegative lags {bad}")
    return Z


def failure_epsilon(
    N: int, s: int, f_norm2: float, g_norm2: float, gamma: float = None
) -> float:
    """Largest eps satisfying the trapping condition
    arccos(1 - 2 eps N sqrt(2 log N) (1 + log(c / eps))) <= gamma
    with c = 1 + 2 ||f||^2 + s ||g||^2, found by bisection."""
    if gamma is None:
        gamma = np.pi / (10.0 * N)
    c = 1.0 + 2.0 * f_norm2 + s * g_norm2
    bound = 1.0 - np.cos(gamma)

    def lhs(eps):
        return 2.0 * eps * N * np.sqrt(2.0 * np.log(N)) * (1.0 + np.log(c / eps))

    lo, hi = 1e-16, 1.0
    if lhs(lo) > bound:
        raise ValueError("condition infeasible even at eps = 1e-16")
    for _ in range(200):
        mid = np.sqrt(lo * hi)
        if lhs(mid) <= bound:
            lo = mid
        else:
            hi = mid
    return lo
